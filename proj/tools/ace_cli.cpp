#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ace/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Subset search over candidate feature blocks with a Bernoulli-mask controller"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  auto* search = app.add_subcommand("search", "Run one search method and write run.jsonl, curve.csv, summary.json");
  search->add_option("--config", config, "Run configuration (JSON)")->required();
  search->add_option("--out", out, "Output directory (overrides config.out)");
  search->add_option("--seed", seed, "Run seed (overrides config.seed)");

  std::string compare_config;
  std::vector<std::string> methods;
  std::vector<std::uint64_t> seeds;
  std::optional<std::string> compare_out;
  auto* compare = app.add_subcommand("compare", "Run several methods over several seeds and tabulate curves");
  compare->add_option("--config", compare_config, "Run configuration (JSON)")->required();
  compare->add_option("--methods", methods, "Comma-separated methods, e.g. ace,random")->required()->delimiter(',');
  compare->add_option("--seeds", seeds, "Comma-separated seeds")->required()->delimiter(',');
  compare->add_option("--out", compare_out, "Output directory (overrides config.out)");

  std::string spec;
  std::string dataset_out;
  auto* gen = app.add_subcommand("gen-dataset", "Generate a synthetic feature-block dataset");
  gen->add_option("--spec", spec, "Dataset recipe (JSON)")->required();
  gen->add_option("--out", dataset_out, "Output dataset file")->required();

  CLI11_PARSE(app, argc, argv);

  if (*search) return ace::cli::cmd_search(config, out, seed);
  if (*compare) return ace::cli::cmd_compare(compare_config, methods, seeds, compare_out);
  if (*gen) return ace::cli::cmd_gen_dataset(spec, dataset_out);
  return 1;
}
