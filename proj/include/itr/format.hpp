#pragma once

#include <string>

namespace itr {

// Decimal text with 12 significant digits; "nan"/"inf" for non-finite values.
// Every CSV number goes through here so reruns are byte-identical.
std::string format_number(double value);

// 64-bit FNV-1a, used to fingerprint configs.
std::string fnv1a_hex(const std::string& text);

}  // namespace itr
