#include "hetpbo/point_table.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace hetpbo;

TEST_CASE("tables accept whitespace, comma and comment syntax") {
  std::istringstream in(
      "# anchors\n"
      "0.25, 1.5\n"
      "\n"
      "  -3e-2\t7   # trailing comment\n"
      "1;2\n");
  const Matrix m = read_table(in);
  REQUIRE(m.rows() == 3);
  REQUIRE(m.cols() == 2);
  CHECK(m(0, 0) == 0.25);
  CHECK(m(1, 0) == -0.03);
  CHECK(m(1, 1) == 7.0);
  CHECK(m(2, 1) == 2.0);
}

TEST_CASE("malformed tables are rejected") {
  std::istringstream ragged("1 2\n3\n");
  CHECK_THROWS_AS(read_table(ragged), TableFormatError);
  std::istringstream bad("1 x\n");
  CHECK_THROWS_AS(read_table(bad), TableFormatError);
  std::istringstream nan("1 nan\n");
  CHECK_THROWS_AS(read_table(nan), TableFormatError);
  std::istringstream wrong("1 2 3\n");
  CHECK_THROWS_AS(read_table(wrong, 2), TableFormatError);
  std::istringstream empty("# nothing\n");
  CHECK(read_table(empty, 3).rows() == 0);
}

TEST_CASE("write then read is exact") {
  Matrix m(3, 2);
  m << 0.1, 1.0 / 3.0, -2.5e-17, 1e300, std::nextafter(1.0, 2.0), 42;
  std::stringstream io;
  write_table(io, m, "round trip");
  const Matrix back = read_table(io);
  CHECK(back == m);
  const auto pts = rows_to_points(back);
  REQUIRE(pts.size() == 3);
  CHECK(pts[1][1] == 1e300);
}
