// krigdes: optimal and incremental sampling designs for simultaneous kriging prediction.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "krigdes/commands.hpp"

int main(int argc, char** argv) {
  using namespace krigdes;
  CLI::App app{"Optimal and incremental sampling designs for simultaneous kriging prediction"};
  app.set_version_flag("--version", std::string(kVersion));
  std::string task, config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  app.add_option("task", task, "optimize | increment | reduce | efficiency | study | variance-map | validate")
      ->required()
      ->check(CLI::IsMember(task_names()));
  app.add_option("--config,-c", config_path, "JSON run configuration")->required();
  app.add_option("--seed", seed, "override search.seed (and the validation seed)");
  app.add_option("--threads", threads, "override search.threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "override output.dir");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kConfigError);
  }

  try {
    RunConfig cfg = load_config(config_path);
    if (seed) {
      cfg.search.seed = *seed;
      cfg.task.validate.seed = *seed;
    }
    if (threads) cfg.search.threads = *threads;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    CommandResult r = run_task(task, cfg);
    write_outputs(r, cfg.out_dir);
    std::cout << r.summary << "\n";
    for (const auto& f : r.files) std::cout << "wrote " << (std::filesystem::path(cfg.out_dir) / f.first).string() << "\n";
    return r.exit_code;
  } catch (const Error& e) {
    std::cerr << "krigdes: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "krigdes: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kNumericalError);
  }
}
