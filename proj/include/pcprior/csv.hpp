#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pcprior::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Index of a named column; throws ParseError if absent.
  std::size_t column(const std::string& name) const;
};

/// Comma-separated numeric table. A first line that does not parse as
/// numbers is taken as the header. Blank lines and '#' comments are skipped.
Table read(std::istream& in);
Table read_file(const std::string& path);

/// Shortest round-trip decimal representation.
std::string format(double x);

void write_row(std::ostream& out, const std::vector<double>& row);
void write_header(std::ostream& out, const std::vector<std::string>& names);

}  // namespace pcprior::csv
