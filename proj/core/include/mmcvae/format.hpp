#ifndef MMCVAE_FORMAT_HPP
#define MMCVAE_FORMAT_HPP

#include <string>

namespace mmcvae {

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

/// Strict parse of a whole token; throws ParseError on anything else.
double parse_double(const std::string& token);

}  // namespace mmcvae

#endif
