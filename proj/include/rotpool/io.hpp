#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rotpool/core.hpp"
#include "rotpool/pooling.hpp"

namespace rotpool {

using Json = nlohmann::ordered_json;

/// Malformed input file. line and column are 1-based; 0 when unknown.
class ParseError : public InvalidInput {
 public:
  ParseError(const std::string& source, int line, int column, const std::string& what);
  std::string_view kind() const noexcept override { return "ParseError"; }
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

struct NamedSet {
  std::string id;
  SampleSet set;
};

struct NamedGroup {
  std::string id;
  std::vector<NamedSet> members;
};

/// Reads sets from text (rows of comma, semicolon, tab or space separated
/// numbers, one feature per line, sets separated by blank lines) or from a
/// JSON list of {"id": ..., "data": [[row], ...]} objects. The format is
/// picked from the first non-blank character.
std::vector<NamedSet> parse_sets(std::string_view text, SignPolicy policy,
                                 const std::string& source = "<input>");
std::vector<NamedSet> ingest(const std::filesystem::path& path, SignPolicy policy);

/// JSON list of {"id": ..., "sets": [{"id": ..., "data": ...}, ...]} objects.
std::vector<NamedGroup> parse_groups(std::string_view text, SignPolicy policy,
                                     const std::string& source = "<input>");
std::vector<NamedGroup> ingest_groups(const std::filesystem::path& path, SignPolicy policy);

/// One or more vectors: a JSON number list or list of lists, or text with
/// one vector per line.
std::vector<Vector> read_vectors(const std::filesystem::path& path);

/// JSON {"weight": [[...]], "bias": [...]}.
AffineMap read_affine(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

Json to_json(const Vector& v);
Json to_json(const Matrix& m);

/// Pretty-prints with two-space indentation. Floating-point numbers use 17
/// significant digits and non-finite values become null, so equal documents
/// always produce equal bytes.
std::string dump_report(const Json& doc);

/// Compact single-line form with the same number formatting.
std::string dump_line(const Json& doc);

}  // namespace rotpool
