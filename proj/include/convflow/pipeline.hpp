#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "convflow/alignment.hpp"
#include "convflow/corpus.hpp"
#include "convflow/gmm.hpp"
#include "convflow/topics.hpp"
#include "convflow/umap.hpp"

namespace convflow::pipeline {

inline constexpr std::string_view kToolVersion = "convflow 0.1.0";

enum class Stage { ingest, segment, embed, project, cluster, metrics, features, models, report, all };

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view s);

/// Direct upstream stages.
std::span<const Stage> upstream(Stage s);
/// Every concrete stage in dependency order. Throws ConfigError if the stage
/// graph has a cycle.
std::vector<Stage> topological_order();

enum class ProviderKind { deterministic, remote };

struct PipelineConfig {
  std::filesystem::path transcripts;
  TranscriptFormat transcript_format = TranscriptFormat::jsonl;
  std::filesystem::path surveys;
  std::optional<std::filesystem::path> scoring;
  std::optional<std::filesystem::path> backchannel_lexicon;
  std::optional<std::filesystem::path> stopwords;
  std::filesystem::path output_dir = "out";

  std::uint64_t seed = 0;
  Segmentation segmentation = Segmentation::cliffhanger;
  std::size_t min_turns = 10;

  ProviderKind provider = ProviderKind::deterministic;
  std::string endpoint = "http://127.0.0.1:8000";

  std::size_t sample_per_conversation = 10;
  umap::UmapConfig umap;
  gmm::SelectionOptions clustering;
  topics::KeynessOptions keyness;

  std::size_t workers = 1;

  /// Reads a YAML file. Relative paths resolve against its directory.
  static PipelineConfig load(const std::filesystem::path& path);
  /// Checks value ranges and that referenced input files exist.
  void validate() const;
};

/// Named seed streams expanded from the master seed.
std::uint64_t stage_seed(const PipelineConfig& config, std::string_view stream);

/// Fingerprint of the settings that affect `stage` and its upstream stages.
std::string config_fingerprint(const PipelineConfig& config, Stage stage);

/// Runs one stage, or all of them in order. Throws MissingUpstreamError when
/// an upstream manifest is absent, stale, or its artifacts changed.
void run_stage(Stage stage, const PipelineConfig& config);

/// Writes plots/<conversation_id>.csv: one `data` row per cross-speaker pair
/// and 100 `curve` rows of the fitted quadratic. Requires the metrics stage.
void emit_plot_data(const std::string& conversation_id, const std::filesystem::path& output_dir);

/// Plot table for one conversation; `clusters` holds the cluster of each turn.
void write_plot_csv(std::ostream& out, const AlignmentSeries& series, const AlignmentFit& fit,
                    std::span<const std::size_t> clusters);

}  // namespace convflow::pipeline
