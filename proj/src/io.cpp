#include "rotpool/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace rotpool {

ParseError::ParseError(const std::string& source, int line, int column, const std::string& what)
    : InvalidInput(line > 0 ? source + ":" + std::to_string(line) + ":" + std::to_string(column) +
                                  ": " + what
                            : source + ": " + what),
      line_(line),
      column_(column) {}

namespace {

bool is_soft_delimiter(char c) { return c == ' ' || c == '\t'; }
bool is_hard_delimiter(char c) { return c == ',' || c == ';'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  for (auto& line : lines) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  }
  return lines;
}

// Parses one row of numbers; columns in errors are 1-based character offsets.
std::vector<double> parse_row(std::string_view line, int line_no, const std::string& source) {
  std::vector<double> row;
  std::size_t i = 0;
  // Set at the start and after every comma or semicolon.
  bool need_value = true;
  while (i < line.size()) {
    const char c = line[i];
    if (is_soft_delimiter(c) || c == '\r') {
      ++i;
      continue;
    }
    if (is_hard_delimiter(c)) {
      if (need_value) {
        throw ParseError(source, line_no, static_cast<int>(i) + 1, "empty field");
      }
      need_value = true;
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < line.size() && !is_soft_delimiter(line[end]) && !is_hard_delimiter(line[end]) &&
           line[end] != '\r') {
      ++end;
    }
    const std::string_view token = line.substr(i, end - i);
    double value = 0.0;
    const char* begin = token.data();
    const char* stop = token.data() + token.size();
    if (!token.empty() && token.front() == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, stop, value);
    if (ec != std::errc() || ptr != stop) {
      throw ParseError(source, line_no, static_cast<int>(i) + 1,
                       "expected a number, found '" + std::string(token) + "'");
    }
    if (!std::isfinite(value)) {
      throw ParseError(source, line_no, static_cast<int>(i) + 1, "non-finite number");
    }
    row.push_back(value);
    need_value = false;
    i = end;
  }
  if (need_value && !row.empty()) {
    throw ParseError(source, line_no, static_cast<int>(line.size()), "trailing delimiter");
  }
  return row;
}

SampleSet make_set(std::vector<std::vector<double>> rows, SignPolicy policy,
                   const std::string& label) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
  }
  try {
    return SampleSet(std::move(m), policy);
  } catch (const InvalidInput& e) {
    throw InvalidInput(label + ": " + e.what());
  }
}

std::vector<NamedSet> parse_text_sets(std::string_view text, SignPolicy policy,
                                      const std::string& source) {
  std::vector<NamedSet> sets;
  std::vector<std::vector<double>> rows;
  int block_start = 0;
  auto flush = [&] {
    if (rows.empty()) return;
    const std::string id = "set-" + std::to_string(sets.size() + 1);
    sets.push_back({id, make_set(std::move(rows), policy,
                                 source + ":" + std::to_string(block_start) + " (" + id + ")")});
    rows.clear();
  };
  const auto lines = split_lines(text);
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const int line_no = static_cast<int>(k) + 1;
    const std::string_view line = trim(lines[k]);
    if (line.empty()) {
      flush();
      continue;
    }
    if (line.front() == '#') continue;
    std::vector<double> row = parse_row(lines[k], line_no, source);
    if (rows.empty()) block_start = line_no;
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(source, line_no, 1,
                       "row has " + std::to_string(row.size()) + " entries, expected " +
                           std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  flush();
  if (sets.empty()) throw ParseError(source, 0, 0, "no sample sets found");
  return sets;
}

std::pair<int, int> line_column(std::string_view text, std::size_t byte) {
  int line = 1;
  int column = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

Json parse_json(std::string_view text, const std::string& source) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, column] = line_column(text, e.byte);
    std::string what = e.what();
    const auto pos = what.find("syntax error");
    throw ParseError(source, line, column,
                     pos == std::string::npos ? "invalid JSON" : what.substr(pos));
  }
}

Matrix json_matrix(const Json& data, const std::string& label) {
  if (!data.is_array() || data.empty()) {
    throw InvalidInput(label + ": data must be a nonempty list of rows");
  }
  std::size_t cols = 0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    const Json& row = data[r];
    if (!row.is_array() || row.empty()) {
      throw InvalidInput(label + ": row " + std::to_string(r + 1) + " must be a nonempty list");
    }
    if (r == 0) cols = row.size();
    if (row.size() != cols) {
      throw InvalidInput(label + ": row " + std::to_string(r + 1) + " has " +
                         std::to_string(row.size()) + " entries, expected " +
                         std::to_string(cols));
    }
  }
  Matrix m(static_cast<Index>(data.size()), static_cast<Index>(cols));
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const Json& v = data[r][c];
      if (!v.is_number()) {
        throw InvalidInput(label + ": entry at row " + std::to_string(r + 1) + ", col " +
                           std::to_string(c + 1) + " is not a number");
      }
      m(static_cast<Index>(r), static_cast<Index>(c)) = v.get<double>();
    }
  }
  return m;
}

Vector json_vector(const Json& data, const std::string& label) {
  if (!data.is_array() || data.empty()) throw InvalidInput(label + ": expected a list of numbers");
  Vector v(static_cast<Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data[i].is_number()) throw InvalidInput(label + ": expected a list of numbers");
    v(static_cast<Index>(i)) = data[i].get<double>();
  }
  return v;
}

std::vector<NamedSet> json_sets(const Json& doc, SignPolicy policy, const std::string& source,
                                const std::string& prefix) {
  if (!doc.is_array()) throw InvalidInput(source + ": expected a list of sets");
  std::vector<NamedSet> sets;
  for (std::size_t k = 0; k < doc.size(); ++k) {
    const Json& item = doc[k];
    if (!item.is_object() || !item.contains("data")) {
      throw InvalidInput(source + ": item " + std::to_string(k + 1) + " needs a \"data\" field");
    }
    std::string id = "set-" + std::to_string(k + 1);
    if (item.contains("id")) {
      if (!item["id"].is_string()) throw InvalidInput(source + ": id must be a string");
      id = item["id"].get<std::string>();
    }
    const std::string label = source + " (" + prefix + id + ")";
    Matrix m = json_matrix(item["data"], label);
    try {
      sets.push_back({id, SampleSet(std::move(m), policy)});
    } catch (const InvalidInput& e) {
      throw InvalidInput(label + ": " + e.what());
    }
  }
  if (sets.empty()) throw InvalidInput(source + ": no sample sets found");
  return sets;
}

bool looks_like_json(std::string_view text) {
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') continue;
    return c == '[' || c == '{';
  }
  return false;
}

void write_number(std::string& out, double v) {
  if (!std::isfinite(v)) {
    out += "null";
    return;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

void write_value(std::string& out, const Json& v, int indent, int depth) {
  const bool pretty = indent >= 0;
  auto newline = [&](int d) {
    if (!pretty) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * d), ' ');
  };
  switch (v.type()) {
    case Json::value_t::object: {
      if (v.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        out += Json(it.key()).dump();
        out += pretty ? ": " : ":";
        write_value(out, it.value(), indent, depth + 1);
      }
      newline(depth);
      out += '}';
      return;
    }
    case Json::value_t::array: {
      if (v.empty()) {
        out += "[]";
        return;
      }
      // Lists of scalars stay on one line so matrices read row by row.
      bool flat = true;
      for (const Json& e : v) flat = flat && !e.is_structured();
      out += '[';
      bool first = true;
      for (const Json& e : v) {
        if (!first) out += pretty && flat ? ", " : ",";
        first = false;
        if (!flat) newline(depth + 1);
        write_value(out, e, indent, depth + 1);
      }
      if (!flat) newline(depth);
      out += ']';
      return;
    }
    case Json::value_t::number_float:
      write_number(out, v.get<double>());
      return;
    default:
      out += v.dump();
      return;
  }
}

}  // namespace

std::vector<NamedSet> parse_sets(std::string_view text, SignPolicy policy,
                                 const std::string& source) {
  if (looks_like_json(text)) return json_sets(parse_json(text, source), policy, source, "");
  return parse_text_sets(text, policy, source);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<NamedSet> ingest(const std::filesystem::path& path, SignPolicy policy) {
  return parse_sets(read_file(path), policy, path.string());
}

std::vector<NamedGroup> parse_groups(std::string_view text, SignPolicy policy,
                                     const std::string& source) {
  const Json doc = parse_json(text, source);
  if (!doc.is_array() || doc.empty()) {
    throw InvalidInput(source + ": expected a nonempty list of groups");
  }
  std::vector<NamedGroup> groups;
  for (std::size_t k = 0; k < doc.size(); ++k) {
    const Json& item = doc[k];
    if (!item.is_object() || !item.contains("sets")) {
      throw InvalidInput(source + ": group " + std::to_string(k + 1) + " needs a \"sets\" field");
    }
    std::string id = "group-" + std::to_string(k + 1);
    if (item.contains("id")) {
      if (!item["id"].is_string()) throw InvalidInput(source + ": id must be a string");
      id = item["id"].get<std::string>();
    }
    groups.push_back({id, json_sets(item["sets"], policy, source, id + "/")});
  }
  return groups;
}

std::vector<NamedGroup> ingest_groups(const std::filesystem::path& path, SignPolicy policy) {
  return parse_groups(read_file(path), policy, path.string());
}

std::vector<Vector> read_vectors(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const std::string source = path.string();
  std::vector<Vector> out;
  if (looks_like_json(text)) {
    const Json doc = parse_json(text, source);
    if (doc.is_array() && !doc.empty() && doc[0].is_array()) {
      for (const Json& row : doc) out.push_back(json_vector(row, source));
    } else {
      out.push_back(json_vector(doc, source));
    }
    return out;
  }
  const auto lines = split_lines(text);
  for (std::size_t k = 0; k < lines.size(); ++k) {
    if (trim(lines[k]).empty()) continue;
    const std::vector<double> row = parse_row(lines[k], static_cast<int>(k) + 1, source);
    out.push_back(Eigen::Map<const Vector>(row.data(), static_cast<Index>(row.size())));
  }
  if (out.empty()) throw ParseError(source, 0, 0, "no vectors found");
  return out;
}

AffineMap read_affine(const std::filesystem::path& path) {
  const std::string source = path.string();
  const Json doc = parse_json(read_file(path), source);
  if (!doc.is_object() || !doc.contains("weight")) {
    throw InvalidInput(source + ": expected an object with \"weight\" and \"bias\"");
  }
  AffineMap map;
  map.weight = json_matrix(doc["weight"], source + " (weight)");
  map.bias = doc.contains("bias") ? json_vector(doc["bias"], source + " (bias)")
                                  : Vector::Zero(map.weight.rows());
  if (!map.weight.allFinite() || !map.bias.allFinite()) {
    throw InvalidInput(source + ": affine map must be finite");
  }
  return map;
}

Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Json to_json(const Matrix& m) {
  Json out = Json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

std::string dump_report(const Json& doc) {
  std::string out;
  write_value(out, doc, 2, 0);
  out += '\n';
  return out;
}

std::string dump_line(const Json& doc) {
  std::string out;
  write_value(out, doc, -1, 0);
  return out;
}

}  // namespace rotpool
