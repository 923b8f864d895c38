#include "convflow/pipeline.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <map>
#include <memory>
#include <sstream>
#include <yaml-cpp/yaml.h>

#include "convflow/csv.hpp"
#include "convflow/dyad.hpp"
#include "convflow/embedding.hpp"
#include "convflow/error.hpp"
#include "convflow/hash.hpp"
#include "convflow/io.hpp"
#include "convflow/segmentation.hpp"

namespace convflow::pipeline {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::array<Stage, 9> kStages{Stage::ingest,   Stage::segment,  Stage::embed,
                                       Stage::project,  Stage::cluster,  Stage::metrics,
                                       Stage::features, Stage::models,   Stage::report};
constexpr std::array<std::string_view, 10> kStageNames{"ingest",  "segment",  "embed",  "project", "cluster",
                                                       "metrics", "features", "models", "report",  "all"};

const std::array<std::vector<Stage>, 10>& upstream_table() {
  static const std::array<std::vector<Stage>, 10> t{{
      {},
      {Stage::ingest},
      {Stage::segment},
      {Stage::embed},
      {Stage::project},
      {Stage::segment, Stage::embed, Stage::cluster},
      {Stage::ingest, Stage::metrics},
      {Stage::features},
      {Stage::models, Stage::metrics},
      {},
  }};
  return t;
}

std::string hash_hex(std::string_view content) { return to_hex(fnv1a64(content)); }

std::string file_hash(const fs::path& p) { return hash_hex(io::read_file(p)); }

std::string sanitize(std::string_view id) {
  std::string s(id);
  for (auto& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  return s;
}

fs::path manifest_path(const fs::path& out, Stage s) {
  return out / "manifests" / (std::string(to_string(s)) + ".json");
}

ojson optional_file(const std::optional<fs::path>& p) {
  if (!p) return nullptr;
  return ojson{{"path", p->string()}, {"hash", file_hash(*p)}};
}

ojson stage_section(const PipelineConfig& c, Stage s) {
  switch (s) {
    case Stage::ingest:
      return {{"transcripts", c.transcripts.string()},
              {"format", c.transcript_format == TranscriptFormat::jsonl ? "jsonl" : "csv"},
              {"surveys", c.surveys.string()}};
    case Stage::segment:
      return {{"segmentation", std::string(to_string(c.segmentation))},
              {"min_turns", c.min_turns},
              {"backchannel_lexicon", optional_file(c.backchannel_lexicon)}};
    case Stage::embed:
      if (c.provider == ProviderKind::remote) return {{"provider", "remote"}, {"endpoint", c.endpoint}};
      return {{"provider", "deterministic"}};
    case Stage::project:
      return {{"seed", c.seed},
              {"per_conversation", c.sample_per_conversation},
              {"n_neighbors", c.umap.n_neighbors},
              {"min_dist", c.umap.min_dist},
              {"n_epochs", c.umap.n_epochs},
              {"negative_sample_rate", c.umap.negative_sample_rate},
              {"mode", c.umap.mode == umap::LayoutMode::exact ? "exact" : "fast"}};
    case Stage::cluster: {
      ojson fam = ojson::array();
      for (auto f : c.clustering.families) fam.push_back(std::string(gmm::to_string(f)));
      return {{"seed", c.seed},
              {"k_min", c.clustering.k_min},
              {"k_max", c.clustering.k_max},
              {"families", fam},
              {"restarts", c.clustering.restarts},
              {"tol", c.clustering.em.tol},
              {"max_iter", c.clustering.em.max_iter}};
    }
    case Stage::metrics:
      return {{"min_doc_frac", c.keyness.min_doc_frac},
              {"max_doc_frac", c.keyness.max_doc_frac},
              {"top_n", c.keyness.top_n},
              {"measure", c.keyness.measure == topics::KeynessMeasure::chi2 ? "chi2" : "g2"},
              {"stopwords", optional_file(c.stopwords)}};
    case Stage::features:
      return {{"scoring", optional_file(c.scoring)}};
    default:
      return ojson::object();
  }
}

// ---- CSV tables ----

struct Table {
  csv::Row names;
  std::vector<csv::Row> rows;

  std::size_t col(std::string_view name) const { return csv::Header(names).require(name); }
};

Table read_table(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  csv::Reader reader(in);
  Table t;
  auto head = reader.next();
  if (!head) throw InputError(p.string() + " is empty");
  t.names = *head;
  while (auto row = reader.next()) {
    if (row->size() == 1 && (*row)[0].empty()) continue;
    if (row->size() != t.names.size()) throw InputError(p.string() + ": wrong field count on line " + std::to_string(reader.line()));
    t.rows.push_back(std::move(*row));
  }
  return t;
}

double to_double(const std::string& s) {
  double v = 0.0;
  if (!io::parse_double(s, v)) throw InputError("bad number '" + s + "'");
  return v;
}

std::size_t to_index(const std::string& s) {
  int v = 0;
  if (!io::parse_int(s, v) || v < 0) throw InputError("bad index '" + s + "'");
  return static_cast<std::size_t>(v);
}

std::string diagnostics_csv(const std::vector<Diagnostic>& diags) {
  std::ostringstream out;
  out << "where,message\n";
  for (const auto& d : diags) out << csv::escape(d.where) << ',' << csv::escape(d.message) << '\n';
  return out.str();
}

// ---- turns artifact ----

std::string turns_jsonl(const std::vector<Conversation>& convs) {
  std::string out;
  for (const auto& c : convs) {
    ojson turns = ojson::array();
    for (const auto& t : c.turns)
      turns.push_back({{"speaker", std::string(1, speaker_char(t.speaker))},
                       {"text", t.text},
                       {"backchannel", t.is_backchannel},
                       {"events", t.source_event_indices}});
    out += ojson{{"conversation_id", c.conversation_id},
                 {"segmentation", std::string(to_string(c.segmentation))},
                 {"turns", std::move(turns)}}
               .dump();
    out += '\n';
  }
  return out;
}

std::vector<Conversation> load_turns(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::vector<Conversation> out;
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      Conversation c;
      c.conversation_id = j.at("conversation_id").get<std::string>();
      c.segmentation = parse_segmentation(j.at("segmentation").get<std::string>());
      for (const auto& t : j.at("turns")) {
        Turn turn;
        turn.index = c.turns.size();
        turn.speaker = *parse_speaker(t.at("speaker").get<std::string>());
        turn.text = t.at("text").get<std::string>();
        turn.is_backchannel = t.at("backchannel").get<bool>();
        turn.source_event_indices = t.at("events").get<std::vector<std::size_t>>();
        c.turns.push_back(std::move(turn));
      }
      out.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(p.string() + ": " + e.what());
  }
  return out;
}

// ---- per-stage bookkeeping ----

class StageRun {
 public:
  StageRun(const PipelineConfig& cfg, Stage stage) : cfg_(cfg), stage_(stage), out_(cfg.output_dir) {}

  fs::path path(const std::string& rel) const { return out_ / rel; }

  // Checks every upstream manifest and records its artifacts as inputs.
  void require_upstream() {
    for (Stage u : upstream(stage_)) {
      const auto mp = manifest_path(out_, u);
      const std::string name(to_string(u));
      if (!fs::exists(mp))
        throw MissingUpstreamError("stage '" + std::string(to_string(stage_)) + "' needs the output of '" + name +
                                       "'; run stage '" + name + "' first",
                                   name);
      nlohmann::json m;
      try {
        m = nlohmann::json::parse(io::read_file(mp));
      } catch (const nlohmann::json::exception&) {
        throw MissingUpstreamError("manifest of '" + name + "' is unreadable; rerun stage '" + name + "'", name);
      }
      if (m.value("config_hash", "") != config_fingerprint(cfg_, u))
        throw MissingUpstreamError("output of '" + name + "' was produced with a different configuration; rerun stage '" +
                                       name + "'",
                                   name);
      for (const auto& a : m.at("artifacts")) {
        const auto rel = a.at("path").get<std::string>();
        const auto p = out_ / rel;
        if (!fs::exists(p) || file_hash(p) != a.at("hash").get<std::string>())
          throw MissingUpstreamError("artifact " + rel + " of '" + name + "' is missing or modified; rerun stage '" +
                                         name + "'",
                                     name);
        inputs_.push_back({{"path", rel}, {"hash", a.at("hash")}});
      }
    }
  }

  void external_input(const fs::path& p) { inputs_.push_back({{"path", p.string()}, {"hash", file_hash(p)}}); }

  void write(const std::string& rel, std::string_view content) {
    io::write_file_atomic(out_ / rel, content);
    artifacts_.push_back({{"path", rel}, {"hash", hash_hex(content)}});
  }

  // For artifacts written by a module's own serializer.
  void record(const std::string& rel) { artifacts_.push_back({{"path", rel}, {"hash", file_hash(out_ / rel)}}); }

  void finish() {
    const ojson m{{"stage", std::string(to_string(stage_))},
                  {"tool_version", std::string(kToolVersion)},
                  {"config_hash", config_fingerprint(cfg_, stage_)},
                  {"config", stage_section(cfg_, stage_)},
                  {"seed", cfg_.seed},
                  {"inputs", inputs_},
                  {"artifacts", artifacts_}};
    io::write_file_atomic(manifest_path(out_, stage_), m.dump(2) + "\n");
  }

 private:
  const PipelineConfig& cfg_;
  Stage stage_;
  fs::path out_;
  ojson inputs_ = ojson::array();
  ojson artifacts_ = ojson::array();
};

std::unique_ptr<EmbeddingProvider> make_provider(const PipelineConfig& cfg) {
  if (cfg.provider == ProviderKind::remote) return std::make_unique<RemoteProvider>(cfg.endpoint);
  return std::make_unique<DeterministicProvider>();
}

// ---- stages ----

void run_ingest(const PipelineConfig& cfg) {
  StageRun run(cfg, Stage::ingest);
  run.external_input(cfg.transcripts);
  run.external_input(cfg.surveys);
  auto tx = ingest_transcripts(cfg.transcripts, cfg.transcript_format);
  auto sv = ingest_surveys(cfg.surveys);
  Dataset ds{std::move(tx.conversations), std::move(sv.records)};
  link_survey_speakers(ds);
  std::vector<Diagnostic> diags;
  for (auto& d : tx.diagnostics) diags.push_back({"transcripts " + d.where, d.message});
  for (auto& d : sv.diagnostics) diags.push_back({"surveys " + d.where, d.message});
  if (ds.transcripts.empty()) throw InputError("no usable transcript rows in " + cfg.transcripts.string());
  persist_dataset(ds, run.path("dataset.json"));
  run.record("dataset.json");
  run.write("ingest_diagnostics.csv", diagnostics_csv(diags));
  run.finish();
}

void run_segment(const PipelineConfig& cfg) {
  StageRun run(cfg, Stage::segment);
  run.require_upstream();
  const auto ds = load_dataset(run.path("dataset.json"));
  const auto lexicon =
      cfg.backchannel_lexicon ? BackchannelLexicon::load(*cfg.backchannel_lexicon) : BackchannelLexicon::defaults();
  std::vector<Conversation> kept;
  std::vector<Diagnostic> diags;
  for (const auto& ev : ds.transcripts) {
    auto conv = segment(ev, cfg.segmentation, lexicon);
    if (auto problem = admission_problem(conv, cfg.min_turns)) {
      diags.push_back({ev.conversation_id, *problem});
      continue;
    }
    kept.push_back(std::move(conv));
  }
  if (kept.empty()) throw InputError("no conversation passed admission");
  run.write("turns.jsonl", turns_jsonl(kept));
  run.write("segment_diagnostics.csv", diagnostics_csv(diags));
  run.finish();
}

void run_embed(const PipelineConfig& cfg) {
  StageRun run(cfg, Stage::embed);
  run.require_upstream();
  const auto convs = load_turns(run.path("turns.jsonl"));
  std::vector<std::string> texts;
  for (const auto& c : convs)
    for (const auto& t : c.turns) texts.push_back(t.text);
  auto provider = make_provider(cfg);
  std::vector<EmbeddingVector> vectors;
  if (cfg.provider == ProviderKind::remote) {
    const auto cache_path = run.path("cache/embeddings.cache");
    auto cache = EmbeddingCache::load(cache_path);
    vectors = embed_batch(texts, *provider, &cache);
    cache.save(cache_path);
  } else {
    vectors = embed_batch(texts, *provider);
  }
  std::vector<EmbeddedConversation> out;
  std::size_t next = 0;
  for (const auto& c : convs) {
    EmbeddedConversation e{c.conversation_id, {}, {}};
    for (const auto& t : c.turns) {
      e.speakers.push_back(t.speaker);
      e.vectors.push_back(vectors[next++]);
    }
    out.push_back(std::move(e));
  }
  save_embeddings(out, run.path("embeddings.bin"));
  run.record("embeddings.bin");
  run.finish();
}

void run_project(const PipelineConfig& cfg) {
  StageRun run(cfg, Stage::project);
  run.require_upstream();
  const auto convs = load_embeddings(run.path("embeddings.bin"));
  const auto sample = umap::sample_fit_set(convs, cfg.sample_per_conversation, stage_seed(cfg, "sampling"));
  std::vector<EmbeddingVector> fit_vectors;
  std::ostringstream sample_csv;
  sample_csv << "conversation_id,turn_index\n";
  for (const auto& item : sample.items) {
    fit_vectors.push_back(item.vector);
    sample_csv << csv::escape(item.conversation_id) << ',' << item.turn_index << '\n';
  }
  umap::UmapConfig ucfg = cfg.umap;
  ucfg.seed = stage_seed(cfg, "umap");
  ucfg.workers = cfg.workers;
  const auto model = umap::fit(fit_vectors, ucfg);
  umap::save_model(model, run.path("projection_model.bin"));
  run.record("projection_model.bin");
  run.write("fit_sample.csv", sample_csv.str());

  std::ostringstream proj;
  proj << "conversation_id,turn_index,x,y\n";
  for (const auto& c : convs) {
    const auto pts = umap::project_batch(model, c.vectors, cfg.workers);
    for (std::size_t i = 0; i < pts.size(); ++i)
      proj << csv::escape(c.conversation_id) << ',' << i << ',' << csv::format_double(pts[i][0]) << ','
           << csv::format_double(pts[i][1]) << '\n';
  }
  run.write("projection.csv", proj.str());
  auto diags = sample.diagnostics;
  diags.insert(diags.end(), model.diagnostics.begin(), model.diagnostics.end());
  run.write("project_diagnostics.csv", diagnostics_csv(diags));
  run.finish();
}

void run_cluster(const PipelineConfig& cfg) {
  StageRun run(cfg, Stage::cluster);
  run.require_upstream();
  const auto table = read_table(run.path("projection.csv"));
  const auto ci = table.col("conversation_id"), ct = table.col("turn_index"), cx = table.col("x"),
             cy = table.col("y");
  std::vector<gmm::Point2> points;
  for (const auto& r : table.rows) points.push_back({to_double(r[cx]), to_double(r[cy])});
  auto opts = cfg.clustering;
  opts.seed = stage_seed(cfg, "gmm");
  opts.workers = cfg.workers;
  const auto sel = gmm::select_model(points, opts);
  gmm::save_model(sel.model, run.path("gmm_model.json"));
  run.record("gmm_model.json");
  std::ostringstream bic;
  gmm::write_bic_table(bic, sel.table);
  run.write("bic_table.csv", bic.str());
  std::ostringstream asg;
  asg << "conversation_id,turn_index,cluster,posterior\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto a = gmm::assign(sel.model, points[i]);
    asg << csv::escape(table.rows[i][ci]) << ',' << table.rows[i][ct] << ',' << a.cluster << ','
        << csv::format_double(a.posterior) << '\n';
  }
  run.write("assignments.csv", asg.str());
  run.finish();
}

// cluster id per turn, keyed by conversation.
std::map<std::string, std::vector<std::size_t>> load_assignments(const fs::path& p) {
  const auto t = read_table(p);
  const auto ci = t.col("conversation_id"), ct = t.col("turn_index"), cc = t.col("cluster");
  std::map<std::string, std::vector<std::size_t>> out;
  for (const auto& r : t.rows) {
    auto& v = out[r[ci]];
    const auto idx = to_index(r[ct]);
    if (v.size() <= idx) v.resize(idx + 1);
    v[idx] = to_index(r[cc]);
  }
  return out;
}

std::map<std::string, AlignmentFit> load_fits(const fs::path& p) {
  const auto t = read_table(p);
  const auto ci = t.col("conversation_id"), cn = t.col("n_points"), c0 = t.col("intercept"), c1 = t.col("linear"),
             c2 = t.col("quadratic"), cv = t.col("residual_variance");
  std::map<std::string, AlignmentFit> out;
  for (const auto& r : t.rows)
    out[r[ci]] = {to_double(r[c0]), to_double(r[c1]), to_double(r[c2]), to_double(r[cv]), to_index(r[cn])};
  return out;
}

std::string plot_csv(const AlignmentSeries& series, const AlignmentFit& fit, std::span<const std::size_t> clusters) {
  std::ostringstream out;
  write_plot_csv(out, series, fit, clusters);
  return out.str();
}

void run_metrics(const PipelineConfig& cfg) {
  StageRun run(cfg, Stage::metrics);
  run.require_upstream();
  const auto convs = load_turns(run.path("turns.jsonl"));
  const auto embedded = load_embeddings(run.path("embeddings.bin"));
  const auto assignments = load_assignments(run.path("assignments.csv"));
  const auto model = gmm::load_model(run.path("gmm_model.json"));
  const std::size_t k = model.n_components;

  std::vector<Diagnostic> diags;
  std::ostringstream entropy, fits;
  entropy << "conversation_id,topic_entropy,n_turns\n";
  fits << "conversation_id,n_points,intercept,linear,quadratic,residual_variance\n";
  std::vector<std::vector<std::string>> texts_by_cluster(k);
  std::vector<std::pair<std::string, std::string>> plots;

  for (std::size_t c = 0; c < convs.size(); ++c) {
    const auto& conv = convs[c];
    const auto& emb = embedded.at(c);
    if (emb.conversation_id != conv.conversation_id || emb.vectors.size() != conv.turns.size())
      throw InputError("embeddings do not match turns for " + conv.conversation_id);
    auto it = assignments.find(conv.conversation_id);
    if (it == assignments.end() || it->second.size() != conv.turns.size())
      throw InputError("cluster assignments do not match turns for " + conv.conversation_id);
    const auto& ids = it->second;
    for (std::size_t t = 0; t < ids.size(); ++t) texts_by_cluster.at(ids[t]).push_back(conv.turns[t].text);

    const auto dist = topics::make_distribution(conv.conversation_id, ids, k);
    entropy << csv::escape(conv.conversation_id) << ',' << csv::format_double(topics::topic_entropy(dist)) << ','
            << conv.turns.size() << '\n';

    const auto series = alignment_series(emb);
    try {
      const auto fit = fit_quadratic(series);
      fits << csv::escape(conv.conversation_id) << ',' << fit.n_points << ',' << csv::format_double(fit.intercept)
           << ',' << csv::format_double(fit.linear) << ',' << csv::format_double(fit.quadratic) << ','
           << csv::format_double(fit.residual_variance) << '\n';
      plots.emplace_back("plots/" + sanitize(conv.conversation_id) + ".csv", plot_csv(series, fit, ids));
    } catch (const NumericalError& e) {
      diags.push_back({conv.conversation_id, std::string("alignment fit skipped: ") + e.what()});
    }
  }
  run.write("topic_entropy.csv", entropy.str());
  run.write("alignment_fits.csv", fits.str());

  const auto stopwords = cfg.stopwords ? topics::load_stopwords(*cfg.stopwords) : topics::default_stopwords();
  std::ostringstream key;
  try {
    topics::write_keyness_csv(key, topics::keyness_keywords(texts_by_cluster, stopwords, cfg.keyness));
  } catch (const InputError& e) {
    diags.push_back({"keyness", e.what()});
    key.str("");
    topics::write_keyness_csv(key, {});
  }
  run.write("keyness.csv", key.str());
  for (const auto& [rel, content] : plots) run.write(rel, content);
  run.write("metrics_diagnostics.csv", diagnostics_csv(diags));
  run.finish();
}

void run_features(const PipelineConfig& cfg) {
  StageRun run(cfg, Stage::features);
  run.require_upstream();
  const auto ds = load_dataset(run.path("dataset.json"));
  const auto scoring = cfg.scoring ? dyad::ScoringConfig::load(*cfg.scoring) : dyad::ScoringConfig::defaults();
  const auto ent = read_table(run.path("topic_entropy.csv"));
  const auto fits = load_fits(run.path("alignment_fits.csv"));
  std::vector<dyad::ConversationMetrics> metrics;
  std::vector<Diagnostic> diags;
  const auto ci = ent.col("conversation_id"), ch = ent.col("topic_entropy");
  for (const auto& r : ent.rows) {
    auto f = fits.find(r[ci]);
    if (f == fits.end()) {
      diags.push_back({r[ci], "no alignment fit; conversation dropped"});
      continue;
    }
    metrics.push_back({r[ci], to_double(r[ch]), f->second});
  }
  auto built = dyad::build_dyad_features(ds.surveys, metrics, scoring);
  diags.insert(diags.end(), built.diagnostics.begin(), built.diagnostics.end());
  std::ostringstream out;
  dyad::write_features_csv(out, built.rows);
  run.write("features.csv", out.str());
  run.write("feature_diagnostics.csv", diagnostics_csv(diags));
  run.finish();
}

void run_models(const PipelineConfig& cfg) {
  StageRun run(cfg, Stage::models);
  run.require_upstream();
  std::ifstream in(run.path("features.csv"), std::ios::binary);
  const auto features = dyad::read_features_csv(in);
  if (features.empty()) throw InputError("feature table is empty");
  const auto desc = dyad::descriptives(features);
  std::ostringstream d;
  dyad::write_descriptives_csv(d, desc);
  run.write("descriptives.csv", d.str());
  const auto reports = dyad::run_models(features, cfg.workers);
  run.write("models.json", dyad::reports_json(reports));
  run.finish();
}

void run_report(const PipelineConfig& cfg) {
  StageRun run(cfg, Stage::report);
  run.require_upstream();
  const auto reports = dyad::reports_from_json(io::read_file(run.path("models.json")));
  std::ifstream din(run.path("descriptives.csv"), std::ios::binary);
  const auto desc = dyad::read_descriptives_csv(din);

  std::ostringstream t3;
  dyad::write_descriptives_text(t3, desc);
  run.write("report/table3_descriptives.txt", t3.str());

  const std::map<std::string, std::string> files{{"model1", "report/table4_model1.txt"},
                                                 {"model2", "report/table5_model2.txt"},
                                                 {"model2b", "report/table5b_model2b.txt"},
                                                 {"model3", "report/table6_model3.txt"},
                                                 {"model4", "report/table7_model4.txt"}};
  for (const auto& r : reports) {
    auto it = files.find(r.model);
    if (it == files.end()) continue;
    std::ostringstream t;
    dyad::write_report_text(t, r);
    run.write(it->second, t.str());
  }

  // Keywords per cluster, one line each.
  const auto key = read_table(run.path("keyness.csv"));
  const auto cc = key.col("cluster"), cs = key.col("stem");
  std::map<std::size_t, std::vector<std::string>> stems;
  for (const auto& r : key.rows) stems[to_index(r[cc])].push_back(r[cs]);
  std::ostringstream t2;
  t2 << "Cluster  Top keywords\n";
  for (const auto& [c, list] : stems) {
    t2 << c;
    t2 << std::string(c < 10 ? 8 : 7, ' ');
    for (std::size_t i = 0; i < list.size(); ++i) t2 << (i ? ", " : "") << list[i];
    t2 << '\n';
  }
  run.write("report/table2_keywords.txt", t2.str());
  run.finish();
}

std::uint64_t parse_u64(const YAML::Node& n, const char* what) {
  try {
    return n.as<std::uint64_t>();
  } catch (const YAML::Exception&) {
    throw ConfigError(std::string(what) + " must be a non-negative integer");
  }
}

}  // namespace

std::string_view to_string(Stage s) { return kStageNames[static_cast<std::size_t>(s)]; }

Stage parse_stage(std::string_view s) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i)
    if (kStageNames[i] == s) return static_cast<Stage>(i);
  throw ConfigError("unknown stage '" + std::string(s) + "'");
}

std::span<const Stage> upstream(Stage s) { return upstream_table()[static_cast<std::size_t>(s)]; }

std::vector<Stage> topological_order() {
  std::vector<Stage> order;
  std::array<int, 9> state{};  // 0 unvisited, 1 on stack, 2 done
  std::function<void(Stage)> visit = [&](Stage s) {
    auto& st = state[static_cast<std::size_t>(s)];
    if (st == 2) return;
    if (st == 1) throw ConfigError("stage graph has a cycle through '" + std::string(to_string(s)) + "'");
    st = 1;
    for (Stage u : upstream(s)) visit(u);
    st = 2;
    order.push_back(s);
  };
  for (Stage s : kStages) visit(s);
  return order;
}

std::uint64_t stage_seed(const PipelineConfig& config, std::string_view stream) {
  return derive_seed(config.seed, stream);
}

std::string config_fingerprint(const PipelineConfig& config, Stage stage) {
  std::string acc = stage_section(config, stage).dump();
  for (Stage u : upstream(stage)) acc += config_fingerprint(config, u);
  return hash_hex(std::string(to_string(stage)) + acc);
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw ConfigError("cannot read config " + path.string() + ": " + e.what());
  }
  if (!root.IsMap()) throw ConfigError("config " + path.string() + " is not a mapping");
  const fs::path base = fs::absolute(path).parent_path();
  auto resolve = [&](const YAML::Node& n) {
    fs::path p = n.as<std::string>();
    return (p.is_absolute() ? p : base / p).lexically_normal();
  };

  PipelineConfig c;
  try {
    const auto input = root["input"];
    if (!input || !input["transcripts"] || !input["surveys"])
      throw ConfigError("config needs input.transcripts and input.surveys");
    c.transcripts = resolve(input["transcripts"]);
    c.surveys = resolve(input["surveys"]);
    if (input["format"]) {
      const auto f = input["format"].as<std::string>();
      if (f == "jsonl") c.transcript_format = TranscriptFormat::jsonl;
      else if (f == "csv") c.transcript_format = TranscriptFormat::csv;
      else throw ConfigError("input.format must be jsonl or csv");
    } else if (c.transcripts.extension() == ".csv") {
      c.transcript_format = TranscriptFormat::csv;
    }
    if (input["scoring"]) c.scoring = resolve(input["scoring"]);
    if (input["backchannel_lexicon"]) c.backchannel_lexicon = resolve(input["backchannel_lexicon"]);
    if (input["stopwords"]) c.stopwords = resolve(input["stopwords"]);

    if (root["output_dir"]) c.output_dir = resolve(root["output_dir"]);
    else c.output_dir = base / "out";
    if (root["seed"]) c.seed = parse_u64(root["seed"], "seed");
    if (root["workers"]) c.workers = root["workers"].as<std::size_t>();
    if (root["segmentation"]) c.segmentation = parse_segmentation(root["segmentation"].as<std::string>());
    if (root["min_turns"]) c.min_turns = root["min_turns"].as<std::size_t>();

    if (const auto e = root["embedding"]) {
      if (e["provider"]) {
        const auto p = e["provider"].as<std::string>();
        if (p == "deterministic") c.provider = ProviderKind::deterministic;
        else if (p == "remote") c.provider = ProviderKind::remote;
        else throw ConfigError("embedding.provider must be deterministic or remote");
      }
      if (e["endpoint"]) c.endpoint = e["endpoint"].as<std::string>();
    }
    if (const auto s = root["sampling"]; s && s["per_conversation"])
      c.sample_per_conversation = s["per_conversation"].as<std::size_t>();
    if (const auto u = root["umap"]) {
      if (u["n_neighbors"]) c.umap.n_neighbors = u["n_neighbors"].as<std::size_t>();
      if (u["min_dist"]) c.umap.min_dist = u["min_dist"].as<double>();
      if (u["n_epochs"]) c.umap.n_epochs = u["n_epochs"].as<std::size_t>();
      if (u["negative_sample_rate"]) c.umap.negative_sample_rate = u["negative_sample_rate"].as<std::size_t>();
      if (u["mode"]) {
        const auto m = u["mode"].as<std::string>();
        if (m == "exact") c.umap.mode = umap::LayoutMode::exact;
        else if (m == "fast") c.umap.mode = umap::LayoutMode::fast;
        else throw ConfigError("umap.mode must be exact or fast");
      }
    }
    if (const auto g = root["clustering"]) {
      if (g["k_min"]) c.clustering.k_min = g["k_min"].as<std::size_t>();
      if (g["k_max"]) c.clustering.k_max = g["k_max"].as<std::size_t>();
      if (g["restarts"]) c.clustering.restarts = g["restarts"].as<std::size_t>();
      if (g["tol"]) c.clustering.em.tol = g["tol"].as<double>();
      if (g["max_iter"]) c.clustering.em.max_iter = g["max_iter"].as<int>();
      if (g["families"]) {
        c.clustering.families.clear();
        for (const auto& f : g["families"]) c.clustering.families.push_back(gmm::parse_family(f.as<std::string>()));
      }
    }
    if (const auto k = root["keyness"]) {
      if (k["min_doc_frac"]) c.keyness.min_doc_frac = k["min_doc_frac"].as<double>();
      if (k["max_doc_frac"]) c.keyness.max_doc_frac = k["max_doc_frac"].as<double>();
      if (k["top_n"]) c.keyness.top_n = k["top_n"].as<std::size_t>();
      if (k["measure"]) {
        const auto m = k["measure"].as<std::string>();
        if (m == "chi2") c.keyness.measure = topics::KeynessMeasure::chi2;
        else if (m == "g2") c.keyness.measure = topics::KeynessMeasure::g2;
        else throw ConfigError("keyness.measure must be chi2 or g2");
      }
    }
  } catch (const YAML::Exception& e) {
    throw ConfigError("bad value in " + path.string() + ": " + e.what());
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

void PipelineConfig::validate() const {
  auto must_exist = [](const fs::path& p, const char* what) {
    if (!fs::is_regular_file(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
  };
  must_exist(transcripts, "transcripts");
  must_exist(surveys, "surveys");
  if (scoring) must_exist(*scoring, "scoring config");
  if (backchannel_lexicon) must_exist(*backchannel_lexicon, "backchannel lexicon");
  if (stopwords) must_exist(*stopwords, "stopword list");
  if (output_dir.empty()) throw ConfigError("output_dir is empty");
  if (min_turns < 2) throw ConfigError("min_turns must be at least 2");
  if (sample_per_conversation == 0) throw ConfigError("sampling.per_conversation must be positive");
  if (workers == 0) throw ConfigError("workers must be positive");
  if (umap.n_neighbors < 2) throw ConfigError("umap.n_neighbors must be at least 2");
  if (!(umap.min_dist > 0.0 && umap.min_dist < 1.0)) throw ConfigError("umap.min_dist must be in (0, 1)");
  if (umap.n_epochs == 0) throw ConfigError("umap.n_epochs must be positive");
  if (clustering.k_min < 1 || clustering.k_max < clustering.k_min) throw ConfigError("bad clustering k range");
  if (clustering.families.empty()) throw ConfigError("clustering.families is empty");
  if (clustering.restarts == 0) throw ConfigError("clustering.restarts must be positive");
  if (!(keyness.min_doc_frac >= 0.0 && keyness.min_doc_frac <= keyness.max_doc_frac && keyness.max_doc_frac <= 1.0))
    throw ConfigError("keyness document-frequency bounds must satisfy 0 <= min <= max <= 1");
  if (keyness.top_n == 0) throw ConfigError("keyness.top_n must be positive");
  if (provider == ProviderKind::remote && endpoint.empty()) throw ConfigError("remote provider needs an endpoint");
}

void run_stage(Stage stage, const PipelineConfig& config) {
  const auto order = topological_order();
  config.validate();
  if (stage == Stage::all) {
    for (Stage s : order) run_stage(s, config);
    return;
  }
  switch (stage) {
    case Stage::ingest: return run_ingest(config);
    case Stage::segment: return run_segment(config);
    case Stage::embed: return run_embed(config);
    case Stage::project: return run_project(config);
    case Stage::cluster: return run_cluster(config);
    case Stage::metrics: return run_metrics(config);
    case Stage::features: return run_features(config);
    case Stage::models: return run_models(config);
    case Stage::report: return run_report(config);
    case Stage::all: break;
  }
}

void write_plot_csv(std::ostream& out, const AlignmentSeries& series, const AlignmentFit& fit,
                    std::span<const std::size_t> clusters) {
  out << "kind,turn_time,similarity,speaker,cluster\n";
  for (const auto& p : series.points) {
    out << "data," << csv::format_double(p.turn_time) << ',' << csv::format_double(p.similarity) << ','
        << speaker_char(p.speakers[1]) << ',';
    if (p.right_turn < clusters.size()) out << clusters[p.right_turn];
    out << '\n';
  }
  constexpr int kCurvePoints = 100;
  for (int i = 0; i < kCurvePoints; ++i) {
    const double t = static_cast<double>(i) / (kCurvePoints - 1);
    out << "curve," << csv::format_double(t) << ',' << csv::format_double(fit.evaluate(t)) << ",,\n";
  }
}

void emit_plot_data(const std::string& conversation_id, const fs::path& output_dir) {
  if (!fs::exists(manifest_path(output_dir, Stage::metrics)))
    throw MissingUpstreamError("plot data needs the metrics stage; run stage 'metrics' first", "metrics");
  const auto fits = load_fits(output_dir / "alignment_fits.csv");
  auto fit = fits.find(conversation_id);
  if (fit == fits.end()) throw InputError("unknown conversation id '" + conversation_id + "'");
  const auto embedded = load_embeddings(output_dir / "embeddings.bin");
  auto emb = std::find_if(embedded.begin(), embedded.end(),
                          [&](const EmbeddedConversation& e) { return e.conversation_id == conversation_id; });
  if (emb == embedded.end()) throw InputError("unknown conversation id '" + conversation_id + "'");
  const auto assignments = load_assignments(output_dir / "assignments.csv");
  const auto it = assignments.find(conversation_id);
  const std::vector<std::size_t> none;
  std::ostringstream out;
  write_plot_csv(out, alignment_series(*emb), fit->second, it == assignments.end() ? none : it->second);
  io::write_file_atomic(output_dir / "plots" / (sanitize(conversation_id) + ".csv"), out.str());
}

}  // namespace convflow::pipeline
