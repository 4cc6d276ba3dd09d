#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>

#include "rotpool/io.hpp"

using namespace rotpool;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  const auto dir = std::filesystem::temp_directory_path() / "rotpool_test_io";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream(path) << text;
  return path;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("text input") {
  const auto sets = parse_sets("1,2\n4,3\n", SignPolicy::NonNegative);
  REQUIRE(sets.size() == 1);
  CHECK(sets[0].id == "set-1");
  CHECK(sets[0].set.dims() == 2);
  CHECK(sets[0].set.samples() == 2);
  CHECK(sets[0].set.data()(1, 0) == 4.0);

  const auto two = parse_sets("# header\n1 2 3\n4\t5\t6\n\n\n7;8\n9;10\n", SignPolicy::NonNegative);
  REQUIRE(two.size() == 2);
  CHECK(two[0].set.samples() == 3);
  CHECK(two[1].id == "set-2");
  CHECK(two[1].set.data()(1, 1) == 10.0);

  CHECK(parse_sets("1.5e-3, +2\r\n", SignPolicy::NonNegative)[0].set.data()(0, 1) == 2.0);
}

TEST_CASE("text input errors carry positions") {
  const std::string neg = message_of([] { parse_sets("-1,2\n4,3\n", SignPolicy::NonNegative, "x.txt"); });
  CHECK(neg.find("row 1, col 1") != std::string::npos);
  CHECK(neg.find("x.txt") != std::string::npos);
  CHECK_NOTHROW(parse_sets("-1,2\n4,3\n", SignPolicy::AllowSigned));

  try {
    parse_sets("1,2\n1,,3\n", SignPolicy::NonNegative, "bad.txt");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(e.column() == 3);
    CHECK(std::string(e.what()) == "bad.txt:2:3: empty field");
    CHECK(e.kind() == "ParseError");
  }
  CHECK_THROWS_AS(parse_sets("1,2\n3\n", SignPolicy::NonNegative), ParseError);
  CHECK_THROWS_AS(parse_sets("1,abc\n", SignPolicy::NonNegative), ParseError);
  CHECK_THROWS_AS(parse_sets("1,2,\n", SignPolicy::NonNegative), ParseError);
  CHECK_THROWS_AS(parse_sets("1,inf\n", SignPolicy::NonNegative), ParseError);
  CHECK_THROWS_AS(parse_sets("# only a comment\n\n", SignPolicy::NonNegative), ParseError);
}

TEST_CASE("JSON input") {
  const auto sets = parse_sets(R"([{"id": "a", "data": [[1, 2], [4, 3]]}, {"data": [[5]]}])",
                               SignPolicy::NonNegative);
  REQUIRE(sets.size() == 2);
  CHECK(sets[0].id == "a");
  CHECK(sets[0].set.data()(1, 1) == 3.0);
  CHECK(sets[1].id == "set-2");

  CHECK_THROWS_AS(parse_sets(R"([{"id": "a", "data": [[1, 2], [4]]}])", SignPolicy::NonNegative),
                  InvalidInput);
  CHECK_THROWS_AS(parse_sets(R"([{"id": "a", "data": [[1, -2]]}])", SignPolicy::NonNegative),
                  InvalidInput);
  CHECK_THROWS_AS(parse_sets(R"([{"id": "a"}])", SignPolicy::NonNegative), InvalidInput);
  try {
    parse_sets("[\n{\"data\": [[1, 2]]\n", SignPolicy::NonNegative, "broken.json");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() >= 2);
  }
}

TEST_CASE("groups") {
  const auto groups = parse_groups(
      R"([{"id": "g", "sets": [{"data": [[1, 2]]}, {"id": "b", "data": [[3, 4, 5]]}]}])",
      SignPolicy::NonNegative);
  REQUIRE(groups.size() == 1);
  CHECK(groups[0].id == "g");
  REQUIRE(groups[0].members.size() == 2);
  CHECK(groups[0].members[1].id == "b");
  CHECK_THROWS_AS(parse_groups("[]", SignPolicy::NonNegative), InvalidInput);
  CHECK_THROWS_AS(parse_groups(R"([{"id": "g"}])", SignPolicy::NonNegative), InvalidInput);
}

TEST_CASE("files") {
  const auto path = write_temp("two.txt", "1,2\n4,3\n\n5,6\n7,8\n");
  CHECK(ingest(path, SignPolicy::NonNegative).size() == 2);
  CHECK_THROWS_AS(ingest(path.parent_path() / "missing.txt", SignPolicy::NonNegative),
                  InvalidInput);

  const auto vectors = read_vectors(write_temp("w.json", "[[0.25, 0.75], [0.5, 0.5]]"));
  REQUIRE(vectors.size() == 2);
  CHECK(vectors[1](0) == 0.5);
  const auto single = read_vectors(write_temp("w1.json", "[0.2, 0.8]"));
  REQUIRE(single.size() == 1);
  CHECK(single[0].size() == 2);
  CHECK(read_vectors(write_temp("w.txt", "0.1 0.9\n\n0.3,0.7\n")).size() == 2);

  const AffineMap map =
      read_affine(write_temp("g.json", R"({"weight": [[1, 0], [0, 2], [1, 1]], "bias": [0, 1, 2]})"));
  CHECK(map.weight.rows() == 3);
  CHECK(map.weight(1, 1) == 2.0);
  CHECK(map.bias(2) == 2.0);
  CHECK(read_affine(write_temp("g0.json", R"({"weight": [[1, 0]]})")).bias.size() == 1);
  CHECK_THROWS_AS(read_affine(write_temp("g1.json", R"({"bias": [1]})")), InvalidInput);
}

TEST_CASE("report formatting") {
  Json doc = Json::object();
  doc["name"] = "x";
  doc["values"] = to_json(Vector(Vector::Constant(2, 0.1)));
  Matrix m(2, 2);
  m << 1.0, std::numeric_limits<double>::quiet_NaN(), 0.5, -2.0;
  doc["plan"] = to_json(m);
  doc["empty"] = Json::array();
  doc["count"] = 3;
  const std::string expected =
      "{\n"
      "  \"name\": \"x\",\n"
      "  \"values\": [0.10000000000000001, 0.10000000000000001],\n"
      "  \"plan\": [\n"
      "    [1, null],\n"
      "    [0.5, -2]\n"
      "  ],\n"
      "  \"empty\": [],\n"
      "  \"count\": 3\n"
      "}\n";
  CHECK(dump_report(doc) == expected);
  CHECK(dump_line(doc) ==
        "{\"name\":\"x\",\"values\":[0.10000000000000001,0.10000000000000001],"
        "\"plan\":[[1,null],[0.5,-2]],\"empty\":[],\"count\":3}");

  // 17 significant digits round-trip every double.
  const double v = 0.1 + 0.2;
  Json one = Json::array({v});
  const Json back = Json::parse(dump_line(one));
  CHECK(back[0].get<double>() == v);
}
