#pragma once
// Experiment drivers behind the CLI subcommands.  Each returns a process exit
// code: 0 success, 2 config error, 3 assumption failure, 4 threshold failure,
// 5 inconclusive.

#include <cstdint>
#include <optional>
#include <string>

namespace rsdp {

struct RunOptions {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<uint64_t> seed;   // overrides the config seed
  std::optional<int> workers;     // overrides the config worker count
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitAssumption = 3;
inline constexpr int kExitThreshold = 4;
inline constexpr int kExitInconclusive = 5;

int cmd_check(const RunOptions& opt);
int cmd_converge(const RunOptions& opt);
int cmd_dominate(const RunOptions& opt);
int cmd_couple(const RunOptions& opt);
int cmd_invariant(const RunOptions& opt);
int cmd_simulate(const RunOptions& opt);

}  // namespace rsdp
