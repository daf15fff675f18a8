#pragma once

#include <string>

#include "ssdg/experiment.hpp"

namespace ssdg {

// format: "csv" | "markdown-table". CSV round-trips through parse_suite_csv.
std::string report_render(const SuiteReport& report, const std::string& format);
SuiteReport parse_suite_csv(const std::string& text);

}  // namespace ssdg
