// artifact: data generation, pretraining, RLAIF, evaluation and reporting.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "artifact/annotations.hpp"
#include "artifact/ddpo.hpp"
#include "artifact/instructions.hpp"
#include "artifact/metrics.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace artifact;

namespace {

constexpr const char* kToolVersion = "1.0.0";

namespace exit_code {
constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;
constexpr int kMissingFile = 3;
constexpr int kVersion = 4;
constexpr int kValidation = 5;
constexpr int kNumerical = 6;
constexpr int kRemote = 7;
}  // namespace exit_code

class MissingFileError : public Error {
 public:
  using Error::Error;
};

const std::string& require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw MissingFileError("no such file: " + path);
  return path;
}

std::string read_text(const std::string& path) {
  std::ifstream in(require_file(path), std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Reads `--config` documents: a JSON object whose "parameters" member (or the
/// object itself) maps long option names to values. Manifests qualify.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return {}; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json doc;
    try {
      doc = json::parse(input);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    const json& params = doc.contains("parameters") ? doc.at("parameters") : doc;
    std::vector<std::string> parents;
    if (doc.contains("subcommand")) parents.push_back(doc.at("subcommand").get<std::string>());
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : params.items()) {
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      const auto add = [&](const json& v) { item.inputs.push_back(v.is_string() ? v.get<std::string>() : v.dump()); };
      if (value.is_array()) {
        for (const auto& v : value) add(v);
      } else {
        add(value);
      }
      items.push_back(std::move(item));
    }
    return items;
  }
};

/// Every effective option value of `sub`, given or defaulted.
json effective_parameters(const CLI::App* sub) {
  json params = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || opt->get_lnames().empty()) continue;
    if (opt->count() > 0) {
      const auto& results = opt->results();
      params[name] = opt->get_expected_max() > 1 ? json(results) : json(results.back());
    } else if (opt->get_type_size() == 0) {
      params[name] = "false";
    } else {
      params[name] = opt->get_default_str();
    }
  }
  return params;
}

struct Run {
  const CLI::App* sub = nullptr;
  fs::path out;
  bool deterministic = false;
  std::vector<std::string> argv;
  json outputs = json::array();
  json results = json::object();

  fs::path output(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }

  void write_manifest() const {
    if (out.empty()) return;
    json m;
    m["tool"] = "artifact";
    m["tool_version"] = kToolVersion;
    m["subcommand"] = sub->get_name();
    m["parameters"] = effective_parameters(sub);
    m["deterministic"] = deterministic;
    m["formats"] = {{"dataset", kDatasetFormatVersion},
                    {"checkpoint", kCheckpointVersion},
                    {"prompt_template", kPromptTemplateVersion}};
    m["command_line"] = argv;
    m["outputs"] = outputs;
    m["results"] = results;
    write_text(out / "manifest.json", m.dump(2) + "\n");
  }
};

// --- shared option groups --------------------------------------------------

struct SceneOptions {
  SceneConfig cfg;
  std::string mix = "clean=0.6,omission=0.1,duplication=0.1,distortion=0.1,out_of_frame=0.1";

  void add(CLI::App* sub, bool with_mix) {
    if (with_mix) {
      sub->add_option("--mix", mix, "Scene mixture, e.g. clean=0.6,omission=0.1,...")
          ->check(CLI::Validator(
              [](std::string& text) {
                try {
                  SceneMix::parse(text);
                } catch (const Error& e) {
                  return std::string(e.what());
                }
                return std::string();
              },
              "MIX"));
    }
    sub->add_option("--presence-threshold", cfg.presence_threshold, "Minimum length of a present limb");
    sub->add_option("--length-lo", cfg.length_lo, "Lower end of the healthy limb-length band");
    sub->add_option("--length-hi", cfg.length_hi, "Upper end of the healthy limb-length band");
    sub->add_option("--nominal-limbs", cfg.nominal_limbs, "Expected number of limbs");
    sub->add_option("--margin", cfg.margin, "Gap between sampled values and predicate boundaries");
    sub->add_option("--frame-margin", cfg.frame_margin, "Gap between a clean body and the frame edge");
  }
};

struct RewardOptions {
  std::string taxonomy_path;
  std::string embeddings_path;
  int dimension = 64;
  std::uint64_t embed_seed = 0;
  double alpha = 0.1;
  double beta = 1.0;
  std::string component = "f";

  void add(CLI::App* sub, bool with_taxonomy) {
    if (with_taxonomy) sub->add_option("--taxonomy", taxonomy_path, "Taxonomy file (built-in when omitted)");
    sub->add_option("--embeddings", embeddings_path, "Token embedding table (hashed 3-grams when omitted)");
    sub->add_option("--embedding-dim", dimension, "Hashed embedding dimension")->check(CLI::PositiveNumber);
    sub->add_option("--embedding-seed", embed_seed, "Hashed embedding seed");
    sub->add_option("--alpha", alpha, "Weight of the category-phrase penalty");
    sub->add_option("--beta", beta, "Constant reward offset");
    sub->add_option("--component", component, "BertScore component")->check(CLI::IsMember({"f", "p", "r"}));
  }

  Taxonomy taxonomy() const {
    return taxonomy_path.empty() ? default_taxonomy() : load_taxonomy_file(require_file(taxonomy_path));
  }

  EmbeddingModel embedding() const {
    if (embeddings_path.empty()) return EmbeddingModel(dimension, embed_seed);
    return EmbeddingModel::from_table_file(require_file(embeddings_path), embed_seed);
  }

  RewardConfig config(const Taxonomy& t) const {
    RewardConfig cfg = RewardConfig::defaults(t);
    cfg.alpha = alpha;
    cfg.beta = beta;
    cfg.component = component == "p" ? ScoreComponent::Precision
                    : component == "r" ? ScoreComponent::Recall
                                       : ScoreComponent::F;
    return cfg;
  }
};

struct ClassifierOptions {
  std::string kind = "oracle";
  std::string endpoint;
  int timeout_ms = 10000;
  int attempts = 3;

  void add(CLI::App* sub) {
    sub->add_option("--classifier", kind, "Answer source for the reward")->check(CLI::IsMember({"oracle", "remote"}));
    sub->add_option("--endpoint", endpoint, "Remote classifier URL (http://host[:port][/path])")
        ->envname("ARTIFACT_CLASSIFIER_ENDPOINT");
    sub->add_option("--timeout-ms", timeout_ms, "Remote request timeout")->check(CLI::PositiveNumber);
    sub->add_option("--attempts", attempts, "Remote attempts per question")->check(CLI::PositiveNumber);
  }
};

// --- gen-data --------------------------------------------------------------

struct GenDataOptions {
  SceneOptions scene;
  int n = 100;
  std::uint64_t seed = 0;
  bool render_images = false;
  int resolution = 64;
};

std::optional<BoundingBox> clipped(double x1, double y1, double x2, double y2) {
  const BoundingBox box{std::clamp(x1, 0.0, 1.0), std::clamp(y1, 0.0, 1.0), std::clamp(x2, 0.0, 1.0),
                        std::clamp(y2, 0.0, 1.0)};
  if (box.degenerate()) return std::nullopt;
  return box;
}

/// One annotation per oracle label, boxed around the offending part of the figure.
std::vector<ArtifactAnnotation> describe(const SceneParams& p, const LabelSet& labels, const SceneConfig& cfg) {
  namespace si = scene_index;
  const double cx = p[si::kCenterX], cy = p[si::kCenterY], r = p[si::kRadius];
  int present = 0;
  double fx1 = cx - r, fy1 = cy - r, fx2 = cx + r, fy2 = cy + r;
  double dx1 = 1e300, dy1 = 1e300, dx2 = -1e300, dy2 = -1e300;
  for (int s = 0; s < kLimbSlots; ++s) {
    const double phi = p[si::angle(s)], l = p[si::length(s)];
    if (!(l >= cfg.presence_threshold)) continue;
    ++present;
    const double ex = cx + (r + l) * std::cos(phi), ey = cy + (r + l) * std::sin(phi);
    fx1 = std::min(fx1, ex), fy1 = std::min(fy1, ey), fx2 = std::max(fx2, ex), fy2 = std::max(fy2, ey);
    if (l < cfg.length_lo || l > cfg.length_hi) {
      const double sx = cx + r * std::cos(phi), sy = cy + r * std::sin(phi);
      dx1 = std::min({dx1, sx, ex}), dy1 = std::min({dy1, sy, ey});
      dx2 = std::max({dx2, sx, ex}), dy2 = std::max({dy2, sy, ey});
    }
  }
  const std::string counts = std::to_string(present) + " limbs, expected " + std::to_string(cfg.nominal_limbs);
  std::vector<ArtifactAnnotation> out;
  for (int id : labels.ids()) {
    ArtifactAnnotation a;
    a.category_id = id;
    switch (id) {
      case category::kDistortion:
        a.box = dx1 <= dx2 ? clipped(dx1, dy1, dx2, dy2) : std::nullopt;
        a.caption = "a limb of implausible length";
        break;
      case category::kOmission:
        a.box = clipped(fx1, fy1, fx2, fy2);
        a.caption = "missing limb: " + counts;
        break;
      case category::kDuplication:
        a.box = clipped(fx1, fy1, fx2, fy2);
        a.caption = "extra limb: " + counts;
        break;
      case category::kOutOfFrame:
        a.box = clipped(cx - r, cy - r, cx + r, cy + r);
        a.caption = "the body is cut off by the frame";
        break;
      default:
        a.caption = std::string(default_taxonomy()[id].name);
    }
    out.push_back(std::move(a));
  }
  return out;
}

int cmd_gen_data(const GenDataOptions& o, Run& run) {
  o.scene.cfg.validate();
  const SceneMix mix = SceneMix::parse(o.scene.mix);
  if (o.n < 1) throw CLI::ValidationError("--n", "must be positive");
  Dataset d;
  d.taxonomy_version = default_taxonomy().version();
  d.metadata = {{"generator", "artifact gen-data"}, {"mix", o.scene.mix}, {"seed", std::to_string(o.seed)}};
  for (int i = 0; i < o.n; ++i) {
    Rng rng = make_stream(o.seed, static_cast<std::uint64_t>(i));
    const ArtifactSpec spec = mix.draw(rng);
    const int condition = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(o.scene.cfg.condition_count())));
    const SceneParams params = sample_scene(rng, spec, condition, o.scene.cfg);
    char ref[32];
    std::snprintf(ref, sizeof ref, "images/%06d.pgm", i);
    AnnotatedImage item;
    item.image_ref = ref;
    item.prompt = "procedural figure, condition " + std::to_string(condition);
    item.generator = "toy-scene";
    item.labels = classify_scene(params, o.scene.cfg);
    item.annotations = describe(params, item.labels, o.scene.cfg);
    item.scene = SceneRecord{std::vector<double>(params.data(), params.data() + kSceneDim), condition};
    if (o.render_images) write_text(run.output(item.image_ref), encode_pgm(render(params, o.resolution)));
    d.items.push_back(std::move(item));
  }
  validate(d, &default_taxonomy());
  save_dataset(d, run.output("dataset.json").string());
  const DistributionSummary summary = summarize(d, default_taxonomy());
  write_text(run.output("summary.csv"), summary_csv(summary, default_taxonomy()));
  run.results["items"] = o.n;
  run.results["artifact_items"] = o.n - summary.no_artifacts;
  std::cout << "wrote " << o.n << " items (" << o.n - summary.no_artifacts << " with artifacts) to "
            << (run.out / "dataset.json").string() << "\n";
  return exit_code::kOk;
}

// --- pretrain --------------------------------------------------------------

struct PretrainOptions {
  SceneOptions scene;
  TrainConfig train{20000, 128, 1e-3};
  DenoiserTopology topology;
  std::uint64_t seed = 0;
  int steps_T = 50;
  std::string init;
};

int cmd_pretrain(const PretrainOptions& o, Run& run) {
  const NoiseSchedule schedule = NoiseSchedule::scaled_linear(o.steps_T);
  Rng rng = make_stream(o.seed, 0);
  Denoiser model = o.init.empty() ? Denoiser(o.topology, rng) : load_checkpoint(require_file(o.init));
  const TrainResult result =
      train_denoiser(std::move(model), scene_example_sampler(SceneMix::parse(o.scene.mix), o.scene.cfg), o.train,
                     schedule, rng);
  save_checkpoint(result.model, run.output("denoiser.ckpt").string());
  std::string csv = "step,loss\n";
  for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
    csv += std::to_string(i + 1) + "," + number(result.loss_curve[i]) + "\n";
  }
  write_text(run.output("loss.csv"), csv);
  const std::size_t tail = std::min<std::size_t>(100, result.loss_curve.size());
  double final_loss = 0;
  for (std::size_t i = result.loss_curve.size() - tail; i < result.loss_curve.size(); ++i) {
    final_loss += result.loss_curve[i];
  }
  final_loss /= static_cast<double>(std::max<std::size_t>(tail, 1));
  run.results["final_loss"] = final_loss;
  std::cout << "trained " << o.train.steps << " steps, final loss " << final_loss << "\n";
  return exit_code::kOk;
}

// --- rlaif -----------------------------------------------------------------

struct RlaifOptions {
  SceneOptions scene;
  RewardOptions reward;
  ClassifierOptions classifier;
  DdpoConfig ddpo;
  std::string checkpoint;
  std::uint64_t seed = 0;
  int steps_T = 50;
  int eval_samples = 512;
  bool no_clip = false;
  bool no_normalize = false;
  bool quiet = false;
};

int cmd_rlaif(RlaifOptions o, Run& run) {
  Denoiser model = load_checkpoint(require_file(o.checkpoint));
  const Taxonomy& taxonomy = default_taxonomy();
  const ArtifactReward reward(o.reward.config(taxonomy), o.reward.embedding(), taxonomy);
  DdpoEnvironment env = oracle_environment(o.scene.cfg, reward, o.steps_T);
  std::unique_ptr<Classifier> remote;
  if (o.classifier.kind == "remote") {
    if (o.classifier.endpoint.empty()) {
      throw CLI::ValidationError("--endpoint", "required for the remote classifier (or ARTIFACT_CLASSIFIER_ENDPOINT)");
    }
    RemoteOptions ro;
    ro.timeout = std::chrono::milliseconds(o.classifier.timeout_ms);
    ro.attempts = o.classifier.attempts;
    remote = std::make_unique<RemoteClassifier>(o.classifier.endpoint, ro);
    env.reward = make_reward_fn(*remote, reward, build_classification_prompt(taxonomy));
  }
  o.ddpo.clip = !o.no_clip;
  o.ddpo.normalize_advantages = !o.no_normalize;
  o.ddpo.checkpoint_path = o.ddpo.checkpoint_every > 0 ? (run.out / "checkpoint.ckpt").string() : "";

  const double before = artifact_rate(model, o.eval_samples, env, stream_seed(o.seed, 1));
  const DdpoResult result = train_loop(std::move(model), env, o.ddpo, stream_seed(o.seed, 2),
                                       [&](int b, const BatchStats& s) {
                                         if (o.quiet) return;
                                         std::fprintf(stderr, "batch %d reward %.4f artifact rate %.3f\n", b + 1,
                                                      s.mean_reward, s.artifact_rate);
                                       });
  const double after = artifact_rate(result.model, o.eval_samples, env, stream_seed(o.seed, 1));
  if (!o.ddpo.checkpoint_path.empty()) run.outputs.push_back("checkpoint.ckpt");
  save_checkpoint(result.model, run.output("denoiser.ckpt").string());
  write_text(run.output("history.csv"), result.history.to_csv());

  const auto& h = result.history.batches;
  const std::size_t decile = std::max<std::size_t>(1, h.size() / 10);
  double first = 0, last = 0;
  if (!h.empty()) {
    for (std::size_t i = 0; i < decile; ++i) {
      first += h[i].mean_reward;
      last += h[h.size() - decile + i].mean_reward;
    }
    first /= static_cast<double>(decile);
    last /= static_cast<double>(decile);
  }
  run.results = {{"artifact_rate_before", before},
                 {"artifact_rate_after", after},
                 {"first_decile_reward", first},
                 {"last_decile_reward", last},
                 {"eval_samples", o.eval_samples}};
  std::printf("artifact rate %.4f -> %.4f; decile reward %.4f -> %.4f\n", before, after, first, last);
  return exit_code::kOk;
}

// --- eval-cls --------------------------------------------------------------

struct EvalClsOptions {
  std::string predictions, gold, taxonomy_path, averaging = "example";
};

/// Labels keyed by image_ref, from a dataset document or an answer list
/// {"predictions": [{"image_ref", "answer"}]}.
std::map<std::string, LabelSet> load_labels(const std::string& path, const Taxonomy& taxonomy) {
  const std::string text = read_text(path);
  std::map<std::string, LabelSet> out;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(path + ": invalid JSON: " + e.what());
  }
  if (doc.is_object() && doc.contains("predictions")) {
    for (const auto& p : doc.at("predictions")) {
      const std::string ref = p.at("image_ref").get<std::string>();
      try {
        out[ref] = parse_answer(p.at("answer").get<std::string>(), taxonomy).labels;
      } catch (const Error& e) {
        throw ValidationError(path + ": prediction for '" + ref + "': " + e.what());
      }
    }
    return out;
  }
  for (const auto& item : dataset_from_json(text).items) out[item.image_ref] = item.labels;
  return out;
}

int cmd_eval_cls(const EvalClsOptions& o, Run& run) {
  const Taxonomy taxonomy =
      o.taxonomy_path.empty() ? default_taxonomy() : load_taxonomy_file(require_file(o.taxonomy_path));
  const auto gold = load_labels(o.gold, taxonomy);
  const auto pred = load_labels(o.predictions, taxonomy);
  std::vector<LabelSet> g, p;
  for (const auto& [ref, labels] : gold) {
    const auto it = pred.find(ref);
    if (it == pred.end()) throw ValidationError("no prediction for '" + ref + "'");
    labels.validate(taxonomy);
    it->second.validate(taxonomy);
    g.push_back(labels);
    p.push_back(it->second);
  }
  if (g.empty()) throw ValidationError("gold file has no items");
  const auto report =
      classification_report(p, g, taxonomy, o.averaging == "micro" ? Averaging::Micro : Averaging::ExampleBased);
  const std::string csv = report_csv(report, taxonomy);
  write_text(run.output("report.csv"), csv);
  run.results = {{"examples", report.n_examples},
                 {"exact_match_accuracy", report.overall.exact_match_accuracy},
                 {"precision", report.overall.precision},
                 {"recall", report.overall.recall},
                 {"f1", report.overall.f1}};
  std::cout << csv;
  return exit_code::kOk;
}

// --- eval-det --------------------------------------------------------------

struct EvalDetOptions {
  std::string predictions, gold;
};

BoundingBox box_from(const json& j) {
  if (!j.is_array() || j.size() != 4) throw ParseError("'box' must be an array of 4 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

/// Detections keyed by image_ref, from {"images": [{"image_ref", "detections":
/// [{"category_id", "box"}]}]} or from the boxed annotations of a dataset.
std::map<std::string, std::vector<Detection>> load_detections(const std::string& path) {
  const std::string text = read_text(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(path + ": invalid JSON: " + e.what());
  }
  std::map<std::string, std::vector<Detection>> out;
  if (doc.is_object() && doc.contains("images")) {
    try {
      for (const auto& image : doc.at("images")) {
        auto& list = out[image.at("image_ref").get<std::string>()];
        for (const auto& d : image.at("detections")) {
          list.push_back({d.at("category_id").get<int>(), box_from(d.at("box"))});
          if (list.back().box.degenerate() || !list.back().box.within_unit_square()) {
            throw ValidationError("box outside the unit square or degenerate");
          }
        }
      }
    } catch (const json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
    return out;
  }
  for (const auto& item : dataset_from_json(text).items) {
    auto& list = out[item.image_ref];
    for (const auto& a : item.annotations) {
      if (a.box) list.push_back({a.category_id, *a.box});
    }
  }
  return out;
}

int cmd_eval_det(const EvalDetOptions& o, Run& run) {
  const auto gold = load_detections(o.gold);
  const auto pred = load_detections(o.predictions);
  std::string csv = "image_ref,ground_truth,predicted,mean_iou\n";
  double total = 0;
  int scored = 0;
  for (const auto& [ref, gts] : gold) {
    const auto it = pred.find(ref);
    const std::vector<Detection> none;
    const auto& preds = it == pred.end() ? none : it->second;
    const DetectionScore s = detection_score(preds, gts);
    csv += ref + "," + std::to_string(gts.size()) + "," + std::to_string(preds.size()) + "," + number(s.mean_iou) + "\n";
    total += s.mean_iou;
    ++scored;
  }
  if (scored == 0) throw ValidationError("gold file has no images");
  const double mean = total / scored;
  csv += "mean,,," + number(mean) + "\n";
  write_text(run.output("detection.csv"), csv);
  run.results = {{"images", scored}, {"mean_iou", mean}};
  std::printf("mean IOU %.6f over %d images\n", mean, scored);
  return exit_code::kOk;
}

// --- reward ----------------------------------------------------------------

struct RewardCmdOptions {
  RewardOptions reward;
  std::string answer;
  bool enumerate = false;
  int max_labels = 1;
};

int cmd_reward(const RewardCmdOptions& o, Run& run) {
  const Taxonomy taxonomy = o.reward.taxonomy();
  const RewardConfig cfg = o.reward.config(taxonomy);
  const EmbeddingModel model = o.reward.embedding();
  if (o.enumerate) {
    const auto rows = enumerate_canonical_rewards(cfg, model, taxonomy, o.max_labels);
    std::string csv = "labels,answer,reward\n";
    double best = -1e300;
    std::string best_answer;
    for (const auto& row : rows) {
      std::string ids = row.labels.is_no_artifacts() ? "no_artifacts" : "";
      for (int id : row.labels.ids()) ids += (ids.empty() ? "" : " ") + std::to_string(id);
      std::string quoted = "\"";
      for (char c : row.answer) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
      csv += ids + "," + quoted + "\"," + number(row.reward) + "\n";
      if (row.reward > best) best = row.reward, best_answer = row.answer;
    }
    if (!run.out.empty()) write_text(run.output("rewards.csv"), csv);
    std::cout << csv;
    run.results = {{"answers", rows.size()}, {"max_reward", best}, {"argmax", best_answer}};
    return exit_code::kOk;
  }
  const double r = artifact_reward(o.answer, cfg, model);
  run.results = {{"answer", o.answer}, {"reward", r}};
  std::cout << number(r) << "\n";
  return exit_code::kOk;
}

// --- render ----------------------------------------------------------------

struct RenderOptions {
  SceneOptions scene;
  std::string dataset, params, checkpoint;
  int samples = 16;
  int resolution = 64;
  int steps_T = 50;
  std::uint64_t seed = 0;
};

int cmd_render(const RenderOptions& o, Run& run) {
  const int sources = !o.dataset.empty() + !o.params.empty() + !o.checkpoint.empty();
  if (sources != 1) throw CLI::ValidationError("render", "give exactly one of --dataset, --params, --checkpoint");
  if (!o.params.empty()) {
    std::vector<double> values;
    std::stringstream s(o.params);
    for (std::string field; std::getline(s, field, ',');) {
      try {
        values.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw CLI::ValidationError("--params", "'" + field + "' is not a number");
      }
    }
    if (values.size() != kSceneDim) {
      throw CLI::ValidationError("--params", "expected " + std::to_string(kSceneDim) + " values");
    }
    const SceneParams p = Eigen::Map<const SceneParams>(values.data());
    write_text(run.output("scene.pgm"), encode_pgm(render(p, o.resolution)));
    run.results["labels"] = canonical_answer(classify_scene(p, o.scene.cfg), default_taxonomy());
    std::cout << run.results["labels"].get<std::string>() << "\n";
    return exit_code::kOk;
  }
  if (!o.dataset.empty()) {
    int count = 0;
    for (const auto& item : load_dataset(require_file(o.dataset)).items) {
      if (!item.scene) continue;
      if (item.scene->params.size() != kSceneDim) throw ValidationError(item.image_ref + ": wrong scene size");
      const SceneParams p = Eigen::Map<const SceneParams>(item.scene->params.data());
      write_text(run.output(item.image_ref), encode_pgm(render(p, o.resolution)));
      ++count;
    }
    run.results["images"] = count;
    std::cout << "rendered " << count << " scenes\n";
    return exit_code::kOk;
  }
  const Denoiser model = load_checkpoint(require_file(o.checkpoint));
  const NoiseSchedule schedule = NoiseSchedule::scaled_linear(o.steps_T);
  const SceneCodec codec(o.scene.cfg);
  Dataset d;
  d.taxonomy_version = default_taxonomy().version();
  d.metadata = {{"generator", "artifact render"}, {"checkpoint", o.checkpoint}, {"seed", std::to_string(o.seed)}};
  int flagged = 0;
  for (int i = 0; i < o.samples; ++i) {
    Rng rng = make_stream(o.seed, static_cast<std::uint64_t>(i));
    const int condition = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(o.scene.cfg.condition_count())));
    const SceneParams p = codec.decode(sample(model, condition, rng, schedule).final_state());
    char ref[32];
    std::snprintf(ref, sizeof ref, "images/%06d.pgm", i);
    AnnotatedImage item;
    item.image_ref = ref;
    item.generator = "denoiser sample";
    item.labels = classify_scene(p, o.scene.cfg);
    item.annotations = describe(p, item.labels, o.scene.cfg);
    item.scene = SceneRecord{std::vector<double>(p.data(), p.data() + kSceneDim), condition};
    flagged += item.labels.is_no_artifacts() ? 0 : 1;
    write_text(run.output(item.image_ref), encode_pgm(render(p, o.resolution)));
    d.items.push_back(std::move(item));
  }
  save_dataset(d, run.output("samples.json").string());
  run.results = {{"samples", o.samples}, {"artifact_samples", flagged}};
  std::cout << "rendered " << o.samples << " samples, " << flagged << " with artifacts\n";
  return exit_code::kOk;
}

// --- report ----------------------------------------------------------------

struct ReportOptions {
  std::string history;
  int window = 10;
};

struct Series {
  std::string name, color;
  std::vector<double> y;
};

std::string svg_chart(const std::string& title, const std::string& y_label, const std::vector<Series>& series) {
  constexpr double kW = 640, kH = 400, kLeft = 64, kRight = 16, kTop = 36, kBottom = 48;
  std::size_t n = 0;
  double lo = 1e300, hi = -1e300;
  for (const auto& s : series) {
    n = std::max(n, s.y.size());
    for (double v : s.y) lo = std::min(lo, v), hi = std::max(hi, v);
  }
  if (!(lo < hi)) lo -= 0.5, hi += 0.5;
  const double pad = 0.05 * (hi - lo);
  lo -= pad, hi += pad;
  const auto px = [&](std::size_t i) { return kLeft + (kW - kLeft - kRight) * (n > 1 ? double(i) / double(n - 1) : 0.5); };
  const auto py = [&](double v) { return kTop + (kH - kTop - kBottom) * (hi - v) / (hi - lo); };
  std::ostringstream svg;
  svg.setf(std::ios::fixed);
  svg.precision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\"" << kW - kRight << "\" y2=\"" << kH - kBottom
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kH - kBottom
      << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4;
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << number(std::round(v * 1000) / 1000)
        << "</text>\n";
    if (n > 0) {
      const std::size_t i = (n - 1) * static_cast<std::size_t>(k) / 4;
      svg << "<text x=\"" << px(i) << "\" y=\"" << kH - kBottom + 16 << "\" text-anchor=\"middle\">" << i + 1
          << "</text>\n";
    }
  }
  svg << "<text x=\"" << (kLeft + kW - kRight) / 2 << "\" y=\"" << kH - 10 << "\" text-anchor=\"middle\">batch</text>\n"
      << "<text x=\"16\" y=\"" << (kTop + kH - kBottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << (kTop + kH - kBottom) / 2 << ")\">" << y_label << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.y.size(); ++i) svg << (i ? " " : "") << px(i) << "," << py(s.y[i]);
    svg << "\"/>\n<text x=\"" << kLeft + 10 << "\" y=\"" << kTop + 14 + 16 * k << "\" fill=\"" << s.color << "\">"
        << s.name << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<double> moving_average(const std::vector<double>& y, int window) {
  std::vector<double> out(y.size());
  double sum = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sum += y[i];
    if (i >= static_cast<std::size_t>(window)) sum -= y[i - window];
    out[i] = sum / static_cast<double>(std::min<std::size_t>(i + 1, window));
  }
  return out;
}

int cmd_report(const ReportOptions& o, Run& run) {
  const TrainingHistory h = TrainingHistory::from_csv(read_text(o.history));
  if (h.batches.empty()) throw ValidationError(o.history + ": history has no batches");
  std::vector<double> reward, rate;
  for (const auto& b : h.batches) reward.push_back(b.mean_reward), rate.push_back(b.artifact_rate);
  const auto smooth = moving_average(reward, o.window);
  std::string csv = "batch,mean_reward,moving_average,artifact_rate\n";
  for (std::size_t i = 0; i < reward.size(); ++i) {
    csv += std::to_string(i + 1) + "," + number(reward[i]) + "," + number(smooth[i]) + "," + number(rate[i]) + "\n";
  }
  write_text(run.output("reward_curve.csv"), csv);
  write_text(run.output("reward_curve.svg"),
             svg_chart("Reward during RLAIF", "mean reward",
                       {{"batch mean", "#9ab", reward},
                        {"moving average (" + std::to_string(o.window) + ")", "#c33", smooth}}));
  write_text(run.output("artifact_rate.svg"),
             svg_chart("Artifact rate during RLAIF", "artifact rate", {{"batch rate", "#36c", rate}}));
  run.results = {{"batches", reward.size()}, {"first_reward", smooth.front()}, {"last_reward", smooth.back()}};
  std::printf("%zu batches, smoothed reward %.4f -> %.4f\n", reward.size(), smooth.front(), smooth.back());
  return exit_code::kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Artifact-aware RLAIF toolkit: synthetic data, diffusion pretraining, DDPO and evaluation"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file of option values, e.g. a previous manifest.json");

  Run run;
  run.argv.assign(argv, argv + argc);
  std::string out;
  app.add_flag("--deterministic", run.deterministic, "Force sequential, reproducible execution paths");

  const auto add_out = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option("--out", out, "Output directory");
    if (required) opt->required();
  };

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a labeled dataset of procedural scenes");
  gen.scene.add(gen_cmd, true);
  gen_cmd->add_option("-n,--n", gen.n, "Number of items");
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_flag("--render", gen.render_images, "Also write a PGM per item");
  gen_cmd->add_option("--resolution", gen.resolution, "Image side in pixels")->check(CLI::Range(16, 4096));
  add_out(gen_cmd, true);

  PretrainOptions pre;
  auto* pre_cmd = app.add_subcommand("pretrain", "Fit the diffusion denoiser on a scene mixture");
  pre.scene.add(pre_cmd, true);
  pre_cmd->add_option("--steps", pre.train.steps, "Optimizer steps")->check(CLI::NonNegativeNumber);
  pre_cmd->add_option("--batch-size", pre.train.batch_size, "Examples per step")->check(CLI::PositiveNumber);
  pre_cmd->add_option("--lr", pre.train.learning_rate, "Adam learning rate")->check(CLI::NonNegativeNumber);
  pre_cmd->add_option("--hidden", pre.topology.hidden, "Hidden width")->check(CLI::PositiveNumber);
  pre_cmd->add_option("--time-dim", pre.topology.time_dim, "Timestep embedding width")->check(CLI::PositiveNumber);
  pre_cmd->add_option("--diffusion-steps", pre.steps_T, "Length of the noise schedule")->check(CLI::PositiveNumber);
  pre_cmd->add_option("--init", pre.init, "Continue from this checkpoint");
  pre_cmd->add_option("--seed", pre.seed, "Random seed");
  add_out(pre_cmd, true);

  RlaifOptions rl;
  rl.ddpo.batches = 300;
  auto* rl_cmd = app.add_subcommand("rlaif", "Fine-tune a pretrained denoiser with DDPO on classifier rewards");
  rl.scene.add(rl_cmd, false);
  rl.reward.add(rl_cmd, false);
  rl.classifier.add(rl_cmd);
  rl_cmd->add_option("--checkpoint", rl.checkpoint, "Pretrained denoiser")->required();
  rl_cmd->add_option("--batches", rl.ddpo.batches, "Number of DDPO batches")->check(CLI::NonNegativeNumber);
  rl_cmd->add_option("--batch-size", rl.ddpo.batch_size, "Trajectories per batch")->check(CLI::PositiveNumber);
  rl_cmd->add_option("--lr", rl.ddpo.learning_rate, "Adam learning rate")->check(CLI::NonNegativeNumber);
  rl_cmd->add_option("--inner-epochs", rl.ddpo.inner_epochs, "Updates per batch")->check(CLI::PositiveNumber);
  rl_cmd->add_option("--clip-range", rl.ddpo.clip_range, "Ratio clip range")->check(CLI::Range(0.0, 1.0));
  rl_cmd->add_flag("--no-clip", rl.no_clip, "Disable ratio clipping");
  rl_cmd->add_flag("--no-normalize", rl.no_normalize, "Use raw rewards as advantages");
  rl_cmd->add_option("--max-grad-norm", rl.ddpo.max_grad_norm, "Gradient norm cap (0 disables)");
  rl_cmd->add_option("--checkpoint-every", rl.ddpo.checkpoint_every, "Batches between checkpoints (0 disables)");
  rl_cmd->add_option("--diffusion-steps", rl.steps_T, "Length of the noise schedule")->check(CLI::PositiveNumber);
  rl_cmd->add_option("--eval-samples", rl.eval_samples, "Samples for the artifact rate")->check(CLI::PositiveNumber);
  rl_cmd->add_option("--seed", rl.seed, "Random seed");
  rl_cmd->add_flag("--quiet", rl.quiet, "Do not print per-batch progress");
  add_out(rl_cmd, true);

  EvalClsOptions cls;
  auto* cls_cmd = app.add_subcommand("eval-cls", "Score multi-label artifact classification");
  cls_cmd->add_option("--predictions", cls.predictions, "Predicted answers or dataset")->required();
  cls_cmd->add_option("--gold", cls.gold, "Gold dataset")->required();
  cls_cmd->add_option("--taxonomy", cls.taxonomy_path, "Taxonomy file (built-in when omitted)");
  cls_cmd->add_option("--averaging", cls.averaging, "Overall averaging")->check(CLI::IsMember({"example", "micro"}));
  add_out(cls_cmd, true);

  EvalDetOptions det;
  auto* det_cmd = app.add_subcommand("eval-det", "Score artifact localization by greedy IOU matching");
  det_cmd->add_option("--predictions", det.predictions, "Predicted detections")->required();
  det_cmd->add_option("--gold", det.gold, "Gold detections or dataset")->required();
  add_out(det_cmd, true);

  RewardCmdOptions rw;
  auto* rw_cmd = app.add_subcommand("reward", "Reward of a classifier answer");
  rw.reward.add(rw_cmd, true);
  auto* answer_opt = rw_cmd->add_option("--answer", rw.answer, "Answer text");
  auto* enum_opt = rw_cmd->add_flag("--enumerate", rw.enumerate, "List rewards of canonical answers instead");
  answer_opt->excludes(enum_opt);
  rw_cmd->add_option("--max-labels", rw.max_labels, "Largest label set to enumerate")->check(CLI::PositiveNumber);
  add_out(rw_cmd, false);

  RenderOptions rd;
  auto* rd_cmd = app.add_subcommand("render", "Rasterize scenes to PGM");
  rd.scene.add(rd_cmd, false);
  rd_cmd->add_option("--dataset", rd.dataset, "Render every scene in a dataset");
  rd_cmd->add_option("--params", rd.params, "Render one scene given as 15 comma-separated values");
  rd_cmd->add_option("--checkpoint", rd.checkpoint, "Render samples drawn from a denoiser");
  rd_cmd->add_option("--samples", rd.samples, "Number of denoiser samples")->check(CLI::PositiveNumber);
  rd_cmd->add_option("--diffusion-steps", rd.steps_T, "Length of the noise schedule")->check(CLI::PositiveNumber);
  rd_cmd->add_option("--resolution", rd.resolution, "Image side in pixels")->check(CLI::Range(16, 4096));
  rd_cmd->add_option("--seed", rd.seed, "Random seed");
  add_out(rd_cmd, true);

  ReportOptions rp;
  auto* rp_cmd = app.add_subcommand("report", "Reward curve CSV and SVG from a training history");
  rp_cmd->add_option("--history", rp.history, "history.csv from rlaif")->required();
  rp_cmd->add_option("--window", rp.window, "Moving-average window")->check(CLI::PositiveNumber);
  add_out(rp_cmd, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_code::kOk : exit_code::kUsage;
  }

  const CLI::App* sub = app.get_subcommands().front();
  run.sub = sub;
  run.out = out;
  try {
    if (!run.out.empty()) fs::create_directories(run.out);
    int code = exit_code::kOk;
    if (sub == gen_cmd) code = cmd_gen_data(gen, run);
    if (sub == pre_cmd) code = cmd_pretrain(pre, run);
    if (sub == rl_cmd) code = cmd_rlaif(rl, run);
    if (sub == cls_cmd) code = cmd_eval_cls(cls, run);
    if (sub == det_cmd) code = cmd_eval_det(det, run);
    if (sub == rw_cmd) {
      if (!rw.enumerate && answer_opt->count() == 0) throw CLI::ValidationError("reward", "give --answer or --enumerate");
      code = cmd_reward(rw, run);
    }
    if (sub == rd_cmd) code = cmd_render(rd, run);
    if (sub == rp_cmd) code = cmd_report(rp, run);
    run.write_manifest();
    return code;
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code::kUsage;
  } catch (const MissingFileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code::kMissingFile;
  } catch (const VersionError& e) {
    std::cerr << "error: version mismatch: " << e.what() << "\n";
    return exit_code::kVersion;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code::kNumerical;
  } catch (const TransportError& e) {
    std::cerr << "error: classifier endpoint: " << e.what() << "\n";
    return exit_code::kRemote;
  } catch (const ProtocolError& e) {
    std::cerr << "error: classifier endpoint: " << e.what() << "\n";
    return exit_code::kRemote;
  } catch (const ValidationError& e) {
    std::cerr << "error: invalid input: " << e.what() << "\n";
    return exit_code::kValidation;
  } catch (const ParseError& e) {
    std::cerr << "error: invalid input: " << e.what() << "\n";
    return exit_code::kValidation;
  } catch (const DomainError& e) {
    std::cerr << "error: invalid input: " << e.what() << "\n";
    return exit_code::kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code::kFailure;
  }
}
