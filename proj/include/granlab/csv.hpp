#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace granlab::csv {

/// Shortest-safe round-trip text for a double: 17 significant digits.
std::string format_double(double v);

/// RFC 4180 field quoting: fields containing a comma, quote, CR or LF are
/// wrapped in quotes with embedded quotes doubled.
std::string quote(const std::string& field);

void write_row(std::ostream& os, const std::vector<std::string>& fields);

}  // namespace granlab::csv
