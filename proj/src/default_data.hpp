#pragma once

#include <string_view>

// Shipped defaults from data/, embedded at configure time.
namespace ssi::data {

extern const std::string_view kLexiconTsv;
extern const std::string_view kTagmapJson;
extern const std::string_view kExpertTermsTxt;

}  // namespace ssi::data
