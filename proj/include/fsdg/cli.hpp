#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fsdg {

/// Runs one `fsdg` command line. Returns the process exit status: 0 on
/// success, 2 config error, 3 data error, 4 numeric failure. Errors are
/// reported as a single `error: <Code>: <message>` line on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

struct EvalRow {
  std::string domain;
  int samples = 0;
  double fine_accuracy = 0.0;
  std::vector<double> level_accuracy;  // y1..y{G-1}, empty for pruned models
};

void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows, int levels);
std::vector<EvalRow> read_eval_csv(std::istream& in);

}  // namespace fsdg
