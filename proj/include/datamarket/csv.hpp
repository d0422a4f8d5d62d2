#pragma once

#include <istream>
#include <string>
#include <vector>

namespace datamarket::csv {

// Shortest round-trippable text for a double ("%.17g" trimmed).
std::string number(double value);

// Splits one line on commas; no quoting support (the formats we read are
// purely numeric apart from the header).
std::vector<std::string> split(const std::string& line);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Reads a header row and data rows; blank lines are skipped. Throws
// ArgumentError on ragged rows.
Table read(std::istream& in);

}  // namespace datamarket::csv
