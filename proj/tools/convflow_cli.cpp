#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "convflow/error.hpp"
#include "convflow/io.hpp"
#include "convflow/pipeline.hpp"
#include "convflow/synthetic.hpp"

namespace {

int exit_code(convflow::ErrorKind kind) {
  switch (kind) {
    case convflow::ErrorKind::config: return 2;
    case convflow::ErrorKind::missing_upstream: return 3;
    case convflow::ErrorKind::numerical: return 4;
    default: return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  using namespace convflow;
  CLI::App app{"Conversation flow analytics: segmentation, alignment, topic clustering and dyad models."};
  app.set_version_flag("--version", std::string(pipeline::kToolVersion));

  std::string config_path, stage_name = "all", provider, endpoint;
  std::size_t workers = 0;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "YAML pipeline configuration");
  app.add_option("--stage", stage_name, "ingest, segment, embed, project, cluster, metrics, features, models, report or all")
      ->capture_default_str();
  auto* workers_opt = app.add_option("--workers", workers, "worker threads (1 is bit-reproducible)")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "master seed");
  app.add_option("--provider", provider, "embedding provider")->check(CLI::IsMember({"deterministic", "remote"}));
  app.add_option("--endpoint", endpoint, "embedding service URL for the remote provider");

  auto* synth = app.add_subcommand("synth", "write a synthetic corpus (transcripts.jsonl, surveys.csv, config.yaml)");
  std::string synth_out;
  synthetic::CorpusOptions copts;
  std::size_t n_conversations = 20;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--conversations", n_conversations, "half single-topic, half mixed-topic")->capture_default_str();
  synth->add_option("--seed", copts.seed, "generator seed")->capture_default_str();

  auto* plot = app.add_subcommand("plot", "write plot data for one conversation (needs the metrics stage)");
  std::string plot_id;
  plot->add_option("conversation_id", plot_id)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) {
      copts.mixed_topic = n_conversations / 2;
      copts.single_topic = n_conversations - copts.mixed_topic;
      const auto corpus = synthetic::generate_corpus(copts);
      const std::filesystem::path dir = synth_out;
      std::ostringstream tx, sv;
      synthetic::write_transcripts_jsonl(tx, corpus.dataset.transcripts);
      synthetic::write_surveys_csv(sv, corpus.dataset.surveys);
      io::write_file_atomic(dir / "transcripts.jsonl", tx.str());
      io::write_file_atomic(dir / "surveys.csv", sv.str());
      std::string mixed;
      for (const auto& id : corpus.mixed_ids) mixed += id + "\n";
      io::write_file_atomic(dir / "mixed_topic_ids.txt", mixed);
      io::write_file_atomic(dir / "config.yaml",
                            "input:\n  transcripts: transcripts.jsonl\n  surveys: surveys.csv\n"
                            "output_dir: out\nseed: " + std::to_string(copts.seed) + "\n");
      return 0;
    }

    if (config_path.empty()) throw ConfigError("--config is required");
    auto cfg = pipeline::PipelineConfig::load(config_path);
    if (*workers_opt) cfg.workers = workers;
    if (*seed_opt) cfg.seed = seed;
    if (!provider.empty())
      cfg.provider = provider == "remote" ? pipeline::ProviderKind::remote : pipeline::ProviderKind::deterministic;
    if (!endpoint.empty()) cfg.endpoint = endpoint;

    if (*plot) {
      pipeline::emit_plot_data(plot_id, cfg.output_dir);
      return 0;
    }
    pipeline::run_stage(pipeline::parse_stage(stage_name), cfg);
    return 0;
  } catch (const Error& e) {
    std::cerr << "convflow: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "convflow: " << e.what() << '\n';
    return 1;
  }
}
