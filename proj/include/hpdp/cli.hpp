#pragma once

// Command-line entry point. Exit codes: 0 success, 2 usage or input error,
// 3 verification failure, 1 anything else.

#include "hpdp/metrics.hpp"

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace hpdp {

// MetricReport JSON: {"task", "n", "acc", "f1_macro", "auc", "c_index",
// "logrank_p"}; metrics that do not apply to the task are null.
nlohmann::json report_to_json(const MetricReport& r);
MetricReport report_from_json(const nlohmann::json& j);

namespace cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitVerification = 3;

inline constexpr const char* kToolVersion = "0.1.0";

int run(int argc, const char* const* argv);
// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cli
}  // namespace hpdp
