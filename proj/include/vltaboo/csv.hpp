#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace vltaboo::csv {

/// Quotes a field if it contains a comma, quote or newline.
std::string escape(std::string_view field);

/// Splits one CSV record, honouring double-quoted fields.
std::vector<std::string> split(std::string_view line);

}  // namespace vltaboo::csv
