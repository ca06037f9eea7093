#include "hetpbo/point_table.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

namespace hetpbo {

Matrix read_table(std::istream& in, std::size_t columns) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    for (char& c : line) {
      if (c == ',' || c == ';' || c == '\t' || c == '\r') c = ' ';
    }
    std::istringstream fields(line);
    std::vector<double> row;
    std::string token;
    while (fields >> token) {
      std::size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(token, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != token.size() || !std::isfinite(value)) {
        throw TableFormatError("line " + std::to_string(line_no) + ": bad number '" + token + "'");
      }
      row.push_back(value);
    }
    if (row.empty()) continue;
    if (columns != 0 && row.size() != columns) {
      throw TableFormatError("line " + std::to_string(line_no) + ": expected " + std::to_string(columns) +
                             " columns, got " + std::to_string(row.size()));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw TableFormatError("line " + std::to_string(line_no) + ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return Matrix(0, static_cast<Eigen::Index>(columns));
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return out;
}

Matrix read_table(const std::filesystem::path& path, std::size_t columns) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_table(in, columns);
}

void write_table(std::ostream& out, const Matrix& rows, const std::string& header_comment) {
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      if (j) out << ' ';
      out << rows(i, j);
    }
    out << '\n';
  }
}

void write_table(const std::filesystem::path& path, const Matrix& rows, const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_table(out, rows, header_comment);
}

std::vector<DesignPoint> rows_to_points(const Matrix& rows) {
  std::vector<DesignPoint> out;
  out.reserve(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out.emplace_back(rows.row(i).transpose());
  return out;
}

}  // namespace hetpbo
