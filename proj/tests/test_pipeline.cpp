#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <json.hpp>
#include <sstream>

#include "convflow/csv.hpp"
#include "convflow/error.hpp"
#include "convflow/pipeline.hpp"
#include "test_support.hpp"

using namespace convflow;
using namespace convflow::pipeline;
namespace fs = std::filesystem;

namespace {

const fs::path kCorpus = fs::path(CONVFLOW_SOURCE_DIR) / "data" / "synthetic";

// A private copy of the bundled corpus with its own config and output dir.
struct Workspace {
  testutil::TempDir dir;
  fs::path config;

  explicit Workspace(std::string_view tag, std::string_view extra = "") : dir(tag) {
    fs::copy_file(kCorpus / "transcripts.jsonl", dir / "transcripts.jsonl");
    fs::copy_file(kCorpus / "surveys.csv", dir / "surveys.csv");
    config = dir.write("config.yaml", "input:\n  transcripts: transcripts.jsonl\n  surveys: surveys.csv\n"
                                      "output_dir: out\nseed: 7\n" + std::string(extra));
  }

  PipelineConfig load() const { return PipelineConfig::load(config); }
  fs::path out() const { return dir / "out"; }
};

std::string expect_missing(Stage stage, const PipelineConfig& cfg) {
  try {
    run_stage(stage, cfg);
  } catch (const MissingUpstreamError& e) {
    return e.stage;
  }
  ADD_FAILURE() << "stage " << to_string(stage) << " ran without its upstream";
  return "";
}

struct CliResult {
  int code = -1;
  std::string err;
};

CliResult cli(const std::string& args, const fs::path& scratch) {
  const auto err = scratch / "stderr.txt";
  const std::string cmd = std::string(CONVFLOW_CLI) + " " + args + " > /dev/null 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, testutil::slurp(err)};
}

csv::Row fields(const std::string& line) {
  std::istringstream in(line);
  csv::Reader reader(in);
  return reader.next().value_or(csv::Row{});
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(StageGraph, TopologicalOrderRespectsUpstream) {
  const auto order = topological_order();
  ASSERT_EQ(order.size(), 9u);
  for (std::size_t i = 0; i < order.size(); ++i)
    for (Stage u : upstream(order[i])) {
      const auto pos = std::find(order.begin(), order.end(), u) - order.begin();
      EXPECT_LT(static_cast<std::size_t>(pos), i) << to_string(u) << " before " << to_string(order[i]);
    }
  EXPECT_EQ(order.front(), Stage::ingest);
  EXPECT_EQ(order.back(), Stage::report);
}

TEST(StageGraph, NamesRoundTrip) {
  for (auto name : {"ingest", "segment", "embed", "project", "cluster", "metrics", "features", "models", "report",
                    "all"})
    EXPECT_EQ(to_string(parse_stage(name)), name);
  EXPECT_THROW(parse_stage("plot"), ConfigError);
}

TEST(PipelineConfigFile, DefaultsAndPathResolution) {
  Workspace ws("cfg");
  const auto cfg = ws.load();
  EXPECT_EQ(cfg.transcripts, (ws.dir / "transcripts.jsonl").lexically_normal());
  EXPECT_EQ(cfg.output_dir, ws.out().lexically_normal());
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(cfg.segmentation, Segmentation::cliffhanger);
  EXPECT_EQ(cfg.provider, ProviderKind::deterministic);
  EXPECT_EQ(cfg.sample_per_conversation, 10u);
  EXPECT_EQ(cfg.umap.min_dist, 0.2);
  EXPECT_EQ(cfg.clustering.k_min, 1u);
  EXPECT_EQ(cfg.clustering.k_max, 12u);
  EXPECT_EQ(cfg.workers, 1u);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(PipelineConfigFile, SectionsOverrideDefaults) {
  Workspace ws("cfg-sections",
               "segmentation: backbiter\nworkers: 2\nsampling:\n  per_conversation: 5\n"
               "umap:\n  min_dist: 0.1\n  n_neighbors: 10\n  mode: fast\n"
               "clustering:\n  k_max: 4\n  families: [full]\n  restarts: 2\n"
               "keyness:\n  top_n: 3\n  measure: g2\n");
  const auto cfg = ws.load();
  EXPECT_EQ(cfg.segmentation, Segmentation::backbiter_main);
  EXPECT_EQ(cfg.workers, 2u);
  EXPECT_EQ(cfg.sample_per_conversation, 5u);
  EXPECT_EQ(cfg.umap.min_dist, 0.1);
  EXPECT_EQ(cfg.umap.n_neighbors, 10u);
  EXPECT_EQ(cfg.umap.mode, umap::LayoutMode::fast);
  EXPECT_EQ(cfg.clustering.k_max, 4u);
  EXPECT_EQ(cfg.clustering.families, (std::vector<gmm::Family>{gmm::Family::full}));
  EXPECT_EQ(cfg.clustering.restarts, 2u);
  EXPECT_EQ(cfg.keyness.top_n, 3u);
  EXPECT_EQ(cfg.keyness.measure, topics::KeynessMeasure::g2);
}

TEST(PipelineConfigFile, InvalidConfigsAreConfigErrors) {
  testutil::TempDir dir("cfg-bad");
  EXPECT_THROW(PipelineConfig::load(dir / "absent.yaml"), ConfigError);
  EXPECT_THROW(PipelineConfig::load(dir.write("a.yaml", "output_dir: out\n")), ConfigError);
  EXPECT_THROW(PipelineConfig::load(dir.write("b.yaml", "input: {transcripts: t, surveys: s}\nseed: -4\n")),
               ConfigError);
  EXPECT_THROW(PipelineConfig::load(dir.write("c.yaml", "input: {transcripts: t, surveys: s}\numap: {mode: slow}\n")),
               ConfigError);
  EXPECT_THROW(
      PipelineConfig::load(dir.write("d.yaml", "input: {transcripts: t, surveys: s}\nsegmentation: greedy\n")),
      ConfigError);
  EXPECT_THROW(PipelineConfig::load(dir.write("e.yaml", "- just\n- a list\n")), ConfigError);
  // Parses, but the inputs do not exist.
  const auto cfg = PipelineConfig::load(dir.write("f.yaml", "input: {transcripts: t.jsonl, surveys: s.csv}\n"));
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(PipelineConfigFile, ValidationRanges) {
  Workspace ws("cfg-ranges");
  auto base = ws.load();
  auto bad = base;
  bad.umap.min_dist = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = base;
  bad.clustering.k_min = 5;
  bad.clustering.k_max = 4;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = base;
  bad.workers = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = base;
  bad.keyness.min_doc_frac = 0.6;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = base;
  bad.sample_per_conversation = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(PipelineConfigFile, SeedStreamsAndFingerprints) {
  Workspace ws("cfg-seeds");
  auto cfg = ws.load();
  EXPECT_NE(stage_seed(cfg, "sampling"), stage_seed(cfg, "umap"));
  EXPECT_NE(stage_seed(cfg, "umap"), stage_seed(cfg, "gmm"));
  EXPECT_EQ(stage_seed(cfg, "gmm"), stage_seed(ws.load(), "gmm"));

  auto changed = cfg;
  changed.umap.min_dist = 0.3;
  for (Stage s : {Stage::ingest, Stage::segment, Stage::embed})
    EXPECT_EQ(config_fingerprint(cfg, s), config_fingerprint(changed, s)) << to_string(s);
  for (Stage s : {Stage::project, Stage::cluster, Stage::metrics, Stage::features, Stage::models, Stage::report})
    EXPECT_NE(config_fingerprint(cfg, s), config_fingerprint(changed, s)) << to_string(s);
  changed = cfg;
  changed.workers = 4;
  for (Stage s : topological_order()) EXPECT_EQ(config_fingerprint(cfg, s), config_fingerprint(changed, s));
}

TEST(Pipeline, ClusterBeforeProjectNamesProject) {
  Workspace ws("order");
  const auto cfg = ws.load();
  run_stage(Stage::ingest, cfg);
  run_stage(Stage::segment, cfg);
  run_stage(Stage::embed, cfg);
  EXPECT_EQ(expect_missing(Stage::cluster, cfg), "project");
  EXPECT_EQ(expect_missing(Stage::metrics, cfg), "cluster");
  try {
    run_stage(Stage::cluster, cfg);
  } catch (const MissingUpstreamError& e) {
    EXPECT_NE(std::string(e.what()).find("'project'"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, FreshDirectoryNeedsIngest) {
  Workspace ws("fresh");
  EXPECT_EQ(expect_missing(Stage::segment, ws.load()), "ingest");
  EXPECT_EQ(expect_missing(Stage::report, ws.load()), "models");
}

TEST(Pipeline, AllProducesReportTables) {
  Workspace ws("all");
  run_stage(Stage::all, ws.load());
  for (auto rel : {"report/table2_keywords.txt", "report/table3_descriptives.txt", "report/table4_model1.txt",
                   "report/table5_model2.txt", "report/table5b_model2b.txt", "report/table6_model3.txt",
                   "report/table7_model4.txt", "features.csv", "topic_entropy.csv", "alignment_fits.csv",
                   "keyness.csv", "bic_table.csv"})
    EXPECT_TRUE(fs::is_regular_file(ws.out() / rel)) << rel;
  for (Stage s : topological_order()) {
    const auto m = nlohmann::json::parse(testutil::slurp(ws.out() / "manifests" / (std::string(to_string(s)) + ".json")));
    EXPECT_EQ(m.at("stage"), to_string(s));
    EXPECT_EQ(m.at("tool_version"), kToolVersion);
    EXPECT_EQ(m.at("config_hash"), config_fingerprint(ws.load(), s));
    EXPECT_EQ(m.at("seed"), 7u);
    EXPECT_FALSE(m.at("artifacts").empty());
  }
  const auto t7 = testutil::slurp(ws.out() / "report/table7_model4.txt");
  EXPECT_NE(t7.find("topic_entropy"), std::string::npos);
  // One entropy row per admitted conversation, each within [0, log2 k].
  const auto k = nlohmann::json::parse(testutil::slurp(ws.out() / "gmm_model.json")).at("n_components").get<double>();
  const auto entropy = lines_of(testutil::slurp(ws.out() / "topic_entropy.csv"));
  ASSERT_EQ(entropy.size(), 21u);
  EXPECT_EQ(entropy[0], "conversation_id,topic_entropy,n_turns");
  for (std::size_t i = 1; i < entropy.size(); ++i) {
    const double h = std::stod(fields(entropy[i]).at(1));
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log2(k) + 1e-12);
  }
}

TEST(Pipeline, RerunIsByteIdentical) {
  Workspace ws("rerun");
  const auto first = ws.load();
  auto second = first;
  second.output_dir = ws.dir / "out2";
  run_stage(Stage::all, first);
  run_stage(Stage::all, second);
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(first.output_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), first.output_dir);
    ASSERT_TRUE(fs::exists(second.output_dir / rel)) << rel;
    EXPECT_EQ(testutil::slurp(entry.path()), testutil::slurp(second.output_dir / rel)) << rel;
    ++compared;
  }
  EXPECT_GT(compared, 40u);
}

TEST(Pipeline, StaleGuard) {
  Workspace ws("stale");
  auto cfg = ws.load();
  run_stage(Stage::all, cfg);

  auto reseeded = cfg;
  reseeded.seed = 8;
  EXPECT_EQ(expect_missing(Stage::cluster, reseeded), "project");
  // Embedding does not depend on the seed, so project can rerun in place
  // and cluster then accepts its output.
  EXPECT_NO_THROW(run_stage(Stage::project, reseeded));
  EXPECT_NO_THROW(run_stage(Stage::cluster, reseeded));
  EXPECT_EQ(expect_missing(Stage::cluster, cfg), "project");
}

TEST(Pipeline, ModifiedArtifactIsDetected) {
  Workspace ws("tamper");
  const auto cfg = ws.load();
  run_stage(Stage::all, cfg);
  const auto proj = ws.out() / "projection.csv";
  const auto original = testutil::slurp(proj);
  ws.dir.write("out/projection.csv", original + "extra,0,0,0\n");
  EXPECT_EQ(expect_missing(Stage::cluster, cfg), "project");
  fs::remove(proj);
  EXPECT_EQ(expect_missing(Stage::cluster, cfg), "project");
  run_stage(Stage::project, cfg);
  EXPECT_EQ(testutil::slurp(proj), original);
  EXPECT_NO_THROW(run_stage(Stage::cluster, cfg));
}

TEST(Plot, RowCountsAndCurveEndpoints) {
  AlignmentSeries series{"c", {}};
  std::vector<std::size_t> clusters;
  for (std::size_t i = 0; i < 40; ++i) {
    AlignmentPoint p;
    p.turn_time = static_cast<double>(i) / 39.0;
    p.similarity = 0.5 + 0.01 * static_cast<double>(i % 7);
    p.speakers = i % 2 ? std::array{Speaker::B, Speaker::A} : std::array{Speaker::A, Speaker::B};
    p.left_turn = i;
    p.right_turn = i + 1;
    series.points.push_back(p);
  }
  for (std::size_t i = 0; i < 41; ++i) clusters.push_back(i % 3);
  const AlignmentFit fit{0.31, -0.17, 0.093, 0.0, 40};
  std::ostringstream out;
  write_plot_csv(out, series, fit, clusters);
  const auto lines = lines_of(out.str());
  ASSERT_EQ(lines.size(), 141u);
  EXPECT_EQ(lines[0], "kind,turn_time,similarity,speaker,cluster");
  std::size_t data = 0, curve = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = fields(lines[i]);
    ASSERT_EQ(f.size(), 5u);
    if (f[0] == "data") {
      ++data;
      EXPECT_EQ(f[3], data % 2 ? "B" : "A");
      EXPECT_EQ(f[4], std::to_string(data % 3));
    } else {
      ASSERT_EQ(f[0], "curve");
      const double t = std::stod(f[1]), y = std::stod(f[2]);
      EXPECT_EQ(y, fit.evaluate(t));
      ++curve;
    }
  }
  EXPECT_EQ(data, 40u);
  EXPECT_EQ(curve, 100u);
  const auto first = fields(lines[41]), last = fields(lines[140]);
  EXPECT_EQ(std::stod(first[1]), 0.0);
  EXPECT_EQ(std::stod(first[2]), fit.intercept);
  EXPECT_EQ(std::stod(last[1]), 1.0);
  EXPECT_EQ(std::stod(last[2]), fit.intercept + fit.linear + fit.quadratic);
}

TEST(Plot, EmitFromPipelineOutput) {
  Workspace ws("plot");
  const auto cfg = ws.load();
  EXPECT_THROW(emit_plot_data("conv-001", cfg.output_dir), MissingUpstreamError);
  run_stage(Stage::all, cfg);
  const auto path = ws.out() / "plots" / "conv-001.csv";
  const auto from_metrics = testutil::slurp(path);
  fs::remove(path);
  emit_plot_data("conv-001", cfg.output_dir);
  EXPECT_EQ(testutil::slurp(path), from_metrics);

  std::size_t n_points = 0;
  for (const auto& line : lines_of(testutil::slurp(ws.out() / "alignment_fits.csv")))
    if (line.starts_with("conv-001,")) n_points = std::stoul(fields(line)[1]);
  EXPECT_GT(n_points, 0u);
  EXPECT_EQ(lines_of(from_metrics).size(), 1 + n_points + 100);
  EXPECT_THROW(emit_plot_data("no-such-conversation", cfg.output_dir), InputError);
}

TEST(Cli, ExitCodes) {
  Workspace ws("cli");
  const auto cfg = "--config '" + ws.config.string() + "'";
  EXPECT_EQ(cli("--version", ws.dir.path()).code, 0);
  EXPECT_EQ(cli(cfg + " --stage ingest", ws.dir.path()).code, 0);
  const auto missing = cli(cfg + " --stage cluster", ws.dir.path());
  EXPECT_EQ(missing.code, 3);
  EXPECT_NE(missing.err.find("'project'"), std::string::npos) << missing.err;
  EXPECT_EQ(cli(cfg + " --stage bogus", ws.dir.path()).code, 2);
  EXPECT_EQ(cli("--config '" + (ws.dir / "none.yaml").string() + "'", ws.dir.path()).code, 2);
  EXPECT_EQ(cli("--stage ingest", ws.dir.path()).code, 2);
  EXPECT_EQ(cli(cfg + " --provider carrier-pigeon", ws.dir.path()).code, 2);
  EXPECT_EQ(cli(cfg + " --workers 0", ws.dir.path()).code, 2);
  EXPECT_EQ(cli(cfg + " plot conv-001", ws.dir.path()).code, 3);
}

TEST(Cli, RunAllAndPlot) {
  Workspace ws("cli-all");
  const auto cfg = "--config '" + ws.config.string() + "'";
  ASSERT_EQ(cli(cfg + " --stage all --workers 1 --seed 7", ws.dir.path()).code, 0);
  EXPECT_TRUE(fs::is_regular_file(ws.out() / "report/table4_model1.txt"));
  EXPECT_EQ(cli(cfg + " plot conv-002", ws.dir.path()).code, 0);
  EXPECT_EQ(cli(cfg + " plot nobody", ws.dir.path()).code, 1);
  // A seed override on the command line makes downstream stages stale.
  EXPECT_EQ(cli(cfg + " --seed 9 --stage cluster", ws.dir.path()).code, 3);
}

TEST(Cli, SynthWritesRunnableCorpus) {
  testutil::TempDir dir("cli-synth");
  ASSERT_EQ(cli("synth --out '" + (dir / "corpus").string() + "' --conversations 6 --seed 3", dir.path()).code, 0);
  for (auto f : {"transcripts.jsonl", "surveys.csv", "config.yaml", "mixed_topic_ids.txt"})
    EXPECT_TRUE(fs::is_regular_file(dir / "corpus" / f)) << f;
  EXPECT_EQ(lines_of(testutil::slurp(dir / "corpus" / "mixed_topic_ids.txt")).size(), 3u);
  const auto cfg = PipelineConfig::load(dir / "corpus" / "config.yaml");
  EXPECT_EQ(cfg.seed, 3u);
  EXPECT_NO_THROW(run_stage(Stage::ingest, cfg));
}
