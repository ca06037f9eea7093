#pragma once

// Plain-text point tables: one row per point, values separated by whitespace
// and/or commas, '#' starts a comment that runs to the end of the line.

#include "hetpbo/core_math.hpp"

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace hetpbo {

class TableFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses a table whose rows all have the same column count. If `columns` is
/// non-zero every row must have exactly that many values.
Matrix read_table(std::istream& in, std::size_t columns = 0);
Matrix read_table(const std::filesystem::path& path, std::size_t columns = 0);

void write_table(std::ostream& out, const Matrix& rows, const std::string& header_comment = {});
void write_table(const std::filesystem::path& path, const Matrix& rows, const std::string& header_comment = {});

std::vector<DesignPoint> rows_to_points(const Matrix& rows);

}  // namespace hetpbo
