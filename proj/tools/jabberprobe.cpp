#include <CLI11.hpp>
#include <iostream>

#include "jabberprobe/experiment.hpp"

using namespace jabberprobe;

int main(int argc, char** argv) {
  CLI::App app{"jabberprobe: syntactic probes on normal and Jabberwocky text"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  std::optional<int> workers;
  app.add_option("-c,--config", config, "INI experiment config");
  app.add_option("--set", overrides, "override a config value, e.g. train.learning_rate=0.001")->take_all();
  app.add_option("--seed", seed, "override the top-level seed");
  app.add_option("--output-dir", output_dir, "override the output directory");
  app.add_option("--workers", workers, "parallel training jobs")->check(CLI::PositiveNumber);

  auto* generate = app.add_subcommand("generate", "write the Jabberwocky twin of the test corpus");
  auto* train = app.add_subcommand("train", "train one probe per model, layer and probe kind");
  auto* search = app.add_subcommand("search", "random hyperparameter search per model, layer and probe kind");
  auto* eval = app.add_subcommand("eval", "score probes and baselines, write results.csv and charts");
  auto* report = app.add_subcommand("report", "redraw the charts from results.csv");

  StubOptions stub;
  auto* extract = app.add_subcommand("extract-stub", "write synthetic embeddings in the extractor's file layout");
  extract->add_option("--corpus", stub.corpus, "CoNLL-U corpus")->required();
  extract->add_option("--out", stub.out_dir, "output directory")->required();
  extract->add_option("--split", stub.split, "split name used in file names")->capture_default_str();
  extract->add_option("--model", stub.model, "model id stored in the files")->capture_default_str();
  extract->add_option("--layers", stub.layers, "layers to write")->delimiter(',')->capture_default_str();
  extract->add_option("--dim", stub.dim, "vector width")->capture_default_str();
  extract->add_option("--stub-seed", stub.seed, "seed for the synthetic vectors")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  LogSink log = [](const std::string& line) { std::cerr << line << "\n"; };
  try {
    if (extract->parsed()) {
      cmd_extract_stub(stub, log);
      return 0;
    }
    if (config.empty()) throw ConfigError("--config: required for this command");
    if (seed) overrides.push_back("seed=" + std::to_string(*seed));
    if (!output_dir.empty()) overrides.push_back("output_dir=" + std::filesystem::absolute(output_dir).string());
    if (workers) overrides.push_back("workers=" + std::to_string(*workers));
    auto cfg = load_config(config, overrides);
    log("config_hash=" + cfg.hash + " seed=" + std::to_string(cfg.seed));
    if (generate->parsed()) cmd_generate(cfg, log);
    if (train->parsed()) cmd_train(cfg, log);
    if (search->parsed()) cmd_search(cfg, log);
    if (eval->parsed()) cmd_eval(cfg, log);
    if (report->parsed()) cmd_report(cfg.output_dir / "results.csv", cfg.output_dir, log);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
