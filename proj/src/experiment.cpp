#include "crossclr/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include "crossclr/errors.hpp"
#include "crossclr/influence.hpp"
#include "crossclr/losses.hpp"

namespace crossclr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Setter = std::function<void(const json&, ExperimentConfig&)>;

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigParseError, "key '" + key + "': " + e.what());
  }
}

void apply_profile(const std::string& name, ExperimentConfig& c) {
  LossConfig p;
  if (name == "youcook2") {
    p = LossConfig::youcook2();
  } else if (name == "lsmdc") {
    p = LossConfig::lsmdc();
  } else {
    throw Error(ErrorKind::ConfigParseError, "unknown profile '" + name + "'");
  }
  c.profile = name;
  c.train.loss_config.kappa = p.kappa;
  c.train.loss_config.lambda_intra = p.lambda_intra;
  c.train.loss_config.top_k = p.top_k;
  c.train.loss_config.beta = p.beta;
  c.train.queue_capacity = name == "youcook2" ? 3000 : 5000;
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
#define CROSSCLR_FIELD(key, type, target) \
  t[key] = [](const json& v, ExperimentConfig& c) { c.target = get_as<type>(v, key); }
    CROSSCLR_FIELD("dataset", std::string, dataset);
    CROSSCLR_FIELD("n_train", std::size_t, n_train);
    CROSSCLR_FIELD("n_val", std::size_t, n_val);
    CROSSCLR_FIELD("n_test", std::size_t, n_test);
    CROSSCLR_FIELD("n_clusters", std::size_t, n_clusters);
    CROSSCLR_FIELD("d_x", std::size_t, d_x);
    CROSSCLR_FIELD("d_y", std::size_t, d_y);
    CROSSCLR_FIELD("d_latent", std::size_t, d_latent);
    CROSSCLR_FIELD("noise_sigma", double, noise_sigma);
    CROSSCLR_FIELD("overlap", double, overlap);
    CROSSCLR_FIELD("tau", double, train.loss_config.tau);
    CROSSCLR_FIELD("lambda", double, train.loss_config.lambda_intra);
    CROSSCLR_FIELD("gamma", double, train.loss_config.gamma);
    CROSSCLR_FIELD("kappa", double, train.loss_config.kappa);
    CROSSCLR_FIELD("pruning", bool, train.loss_config.pruning_enabled);
    CROSSCLR_FIELD("weighting", bool, train.loss_config.weighting_enabled);
    CROSSCLR_FIELD("intra", bool, train.loss_config.intra_enabled);
    CROSSCLR_FIELD("margin", double, train.loss_config.margin);
    CROSSCLR_FIELD("beta", double, train.loss_config.beta);
    CROSSCLR_FIELD("top_k", std::size_t, train.loss_config.top_k);
    CROSSCLR_FIELD("queue_min_fill", std::size_t, train.loss_config.queue_min_fill);
    CROSSCLR_FIELD("batch_size", std::size_t, train.batch_size);
    CROSSCLR_FIELD("epochs", std::size_t, train.epochs);
    CROSSCLR_FIELD("lr", double, train.lr);
    CROSSCLR_FIELD("warmup_epochs", std::size_t, train.warmup_epochs);
    CROSSCLR_FIELD("plateau_patience", std::size_t, train.plateau_patience);
    CROSSCLR_FIELD("plateau_cooldown", std::size_t, train.plateau_cooldown);
    CROSSCLR_FIELD("lr_decay_factor", double, train.lr_decay_factor);
    CROSSCLR_FIELD("momentum", double, train.momentum);
    CROSSCLR_FIELD("beta2", double, train.beta2);
    CROSSCLR_FIELD("queue_capacity", std::size_t, train.queue_capacity);
    CROSSCLR_FIELD("embed_dim", std::size_t, train.embed_dim);
    CROSSCLR_FIELD("hidden_dim", std::size_t, train.hidden_dim);
    CROSSCLR_FIELD("n_seeds", std::size_t, n_seeds);
    CROSSCLR_FIELD("gammas", std::vector<double>, gammas);
    CROSSCLR_FIELD("kappas", std::vector<double>, kappas);
    CROSSCLR_FIELD("gradcheck_configs", std::size_t, gradcheck_configs);
    CROSSCLR_FIELD("gradcheck_h", double, gradcheck_h);
    CROSSCLR_FIELD("gradcheck_tolerance", double, gradcheck_tolerance);
    CROSSCLR_FIELD("checkpoint", std::string, checkpoint);
    CROSSCLR_FIELD("split", std::string, split);
    CROSSCLR_FIELD("bins", std::size_t, bins);
    CROSSCLR_FIELD("ks", std::vector<std::size_t>, ks);
#undef CROSSCLR_FIELD
    t["seed"] = [](const json& v, ExperimentConfig& c) { c.seed = get_as<std::uint64_t>(v, "seed"); };
    t["data_seed"] = [](const json& v, ExperimentConfig& c) {
      c.data_seed = get_as<std::uint64_t>(v, "data_seed");
    };
    t["profile"] = [](const json& v, ExperimentConfig& c) { apply_profile(get_as<std::string>(v, "profile"), c); };
    t["loss"] = [](const json& v, ExperimentConfig& c) {
      c.train.loss = parse_loss_kind(get_as<std::string>(v, "loss"));
    };
    t["losses"] = [](const json& v, ExperimentConfig& c) {
      c.losses.clear();
      for (const auto& name : get_as<std::vector<std::string>>(v, "losses")) c.losses.push_back(parse_loss_kind(name));
    };
    t["threshold_mode"] = [](const json& v, ExperimentConfig& c) {
      c.train.loss_config.threshold_mode = parse_threshold_mode(get_as<std::string>(v, "threshold_mode"));
    };
    t["weight_norm"] = [](const json& v, ExperimentConfig& c) {
      c.train.loss_config.weight_norm = parse_weight_norm(get_as<std::string>(v, "weight_norm"));
    };
    t["reduction"] = [](const json& v, ExperimentConfig& c) {
      c.train.loss_config.reduction = parse_reduction(get_as<std::string>(v, "reduction"));
    };
    t["optimizer"] = [](const json& v, ExperimentConfig& c) {
      c.train.optimizer = parse_optimizer(get_as<std::string>(v, "optimizer"));
    };
    return t;
  }();
  return table;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::PathError, "cannot write " + path.string());
  out << text;
}

fs::path resolve_in(const fs::path& out_dir, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? p : out_dir / p;
}

TrainConfig cell_config(const ExperimentConfig& c, LossKind kind, std::size_t seed_index) {
  TrainConfig t = c.train;
  t.loss = kind;
  t.seed = c.require_seed() + seed_index;
  return t;
}

json cell_json(const CellResult& r) {
  return {{"r1_ab", r.a_to_b.recall_at.at(1)},   {"r5_ab", r.a_to_b.recall_at.at(5)},
          {"r10_ab", r.a_to_b.recall_at.at(10)}, {"r1_ba", r.b_to_a.recall_at.at(1)},
          {"r5_ba", r.b_to_a.recall_at.at(5)},   {"r10_ba", r.b_to_a.recall_at.at(10)},
          {"mdr_ab", r.a_to_b.median_rank},      {"mdr_ba", r.b_to_a.median_rank},
          {"mnr_ab", r.a_to_b.mean_rank},        {"mnr_ba", r.b_to_a.mean_rank},
          {"positive_mean", r.histogram.positive_mean},
          {"negative_mean", r.histogram.negative_mean},
          {"final_train_loss", r.log.empty() ? 0.0 : r.log.back().train_loss}};
}

const std::vector<std::string>& metric_keys() {
  static const std::vector<std::string> keys = {"r1_ab", "r5_ab", "r10_ab", "r1_ba", "r5_ba", "r10_ba",
                                                "positive_mean", "negative_mean"};
  return keys;
}

// Summary of per-seed cells: recalls in percent.
json summarize(const json& cells) {
  json summary = json::object();
  for (const auto& key : metric_keys()) {
    const bool percent = key.starts_with("r");
    std::vector<double> v;
    for (const auto& cell : cells) v.push_back(cell.at(key).get<double>() * (percent ? 100.0 : 1.0));
    const MeanStd ms = mean_std(v);
    summary[key] = {{"mean", ms.mean}, {"std", ms.stddev}, {"text", format_mean_std(ms)}};
  }
  return summary;
}

json run_rows(const ExperimentConfig& c, const std::vector<std::pair<std::string, TrainConfig>>& rows) {
  const PairedEmbeddingDataset ds = load_or_generate(c);
  const PairedEmbeddingDataset train = ds.split("train");
  const PairedEmbeddingDataset val = ds.split("val");
  json out = json::array();
  for (const auto& [name, base] : rows) {
    json cells = json::array();
    for (std::size_t s = 0; s < c.n_seeds; ++s) {
      TrainConfig t = base;
      t.seed = c.require_seed() + s;
      json cell = cell_json(train_and_evaluate(t, train, val, val, c.bins));
      cell["seed"] = t.seed;
      cells.push_back(cell);
    }
    out.push_back({{"name", name}, {"cells", cells}, {"summary", summarize(cells)}});
  }
  return out;
}

// Random inputs for one gradient-check configuration.
struct GradCase {
  EmbeddingBatch zx, zy, in_x, in_y;
};

Matrix gaussian(std::size_t n, std::size_t d, std::mt19937_64& rng, double sigma = 1.0, double offset = 0.0) {
  std::normal_distribution<double> normal(0.0, sigma);
  Matrix m(n, d);
  for (double& v : m.values()) v = offset + normal(rng);
  return m;
}

}  // namespace

std::uint64_t ExperimentConfig::require_seed() const {
  if (!seed) throw Error(ErrorKind::ConfigParseError, "a seed is required");
  return *seed;
}

ExperimentConfig apply_config_json(const json& j, ExperimentConfig base) {
  if (!j.is_object()) throw Error(ErrorKind::ConfigParseError, "config must be a JSON object");
  const auto& table = setters();
  for (const auto& [key, value] : j.items()) {
    if (!table.contains(key)) throw Error(ErrorKind::ConfigParseError, "unknown config key '" + key + "'");
  }
  if (j.contains("profile")) table.at("profile")(j.at("profile"), base);
  for (const auto& [key, value] : j.items()) {
    if (key != "profile") table.at(key)(value, base);
  }
  return base;
}

json to_json(const ExperimentConfig& c) {
  json losses = json::array();
  for (LossKind k : c.losses) losses.push_back(std::string(to_string(k)));
  const LossConfig& l = c.train.loss_config;
  const TrainConfig& t = c.train;
  json j = {{"dataset", c.dataset},
            {"n_train", c.n_train},
            {"n_val", c.n_val},
            {"n_test", c.n_test},
            {"n_clusters", c.n_clusters},
            {"d_x", c.d_x},
            {"d_y", c.d_y},
            {"d_latent", c.d_latent},
            {"noise_sigma", c.noise_sigma},
            {"overlap", c.overlap},
            {"profile", c.profile},
            {"loss", std::string(to_string(t.loss))},
            {"tau", l.tau},
            {"lambda", l.lambda_intra},
            {"gamma", l.gamma},
            {"kappa", l.kappa},
            {"threshold_mode", std::string(to_string(l.threshold_mode))},
            {"weight_norm", std::string(to_string(l.weight_norm))},
            {"reduction", std::string(to_string(l.reduction))},
            {"pruning", l.pruning_enabled},
            {"weighting", l.weighting_enabled},
            {"intra", l.intra_enabled},
            {"margin", l.margin},
            {"beta", l.beta},
            {"top_k", l.top_k},
            {"queue_min_fill", l.queue_min_fill},
            {"batch_size", t.batch_size},
            {"epochs", t.epochs},
            {"lr", t.lr},
            {"warmup_epochs", t.warmup_epochs},
            {"plateau_patience", t.plateau_patience},
            {"plateau_cooldown", t.plateau_cooldown},
            {"lr_decay_factor", t.lr_decay_factor},
            {"optimizer", std::string(to_string(t.optimizer))},
            {"momentum", t.momentum},
            {"beta2", t.beta2},
            {"queue_capacity", t.queue_capacity},
            {"embed_dim", t.embed_dim},
            {"hidden_dim", t.hidden_dim},
            {"n_seeds", c.n_seeds},
            {"losses", losses},
            {"gammas", c.gammas},
            {"kappas", c.kappas},
            {"gradcheck_configs", c.gradcheck_configs},
            {"gradcheck_h", c.gradcheck_h},
            {"gradcheck_tolerance", c.gradcheck_tolerance},
            {"checkpoint", c.checkpoint},
            {"split", c.split},
            {"bins", c.bins},
            {"ks", c.ks}};
  if (c.seed) j["seed"] = *c.seed;
  if (c.seed || c.data_seed) j["data_seed"] = c.resolved_data_seed();
  return j;
}

PairedEmbeddingDataset load_or_generate(const ExperimentConfig& c) {
  if (!c.dataset.empty()) {
    if (!fs::exists(c.dataset)) throw Error(ErrorKind::PathError, "dataset manifest not found: " + c.dataset);
    return load_dataset(c.dataset);
  }
  SyntheticSpec spec;
  spec.n_pairs = c.n_train + c.n_val + c.n_test;
  spec.n_clusters = c.n_clusters;
  spec.d_x = c.d_x;
  spec.d_y = c.d_y;
  spec.d_latent = c.d_latent;
  spec.noise_sigma = c.noise_sigma;
  spec.overlap = c.overlap;
  spec.seed = c.resolved_data_seed();
  PairedEmbeddingDataset ds = generate_synthetic(spec);
  ds.splits.clear();
  ds.splits["train"] = {0, c.n_train};
  ds.splits["val"] = {c.n_train, c.n_train + c.n_val};
  ds.splits["test"] = {c.n_train + c.n_val, spec.n_pairs};
  return ds;
}

CellResult train_and_evaluate(const TrainConfig& config, const PairedEmbeddingDataset& train,
                              const PairedEmbeddingDataset& val, const PairedEmbeddingDataset& eval_set,
                              std::size_t bins) {
  FitResult fitted = fit(config, train, val);
  const auto [ex, ey] = embed_dataset(fitted.state, eval_set);
  const std::vector<std::size_t> ks = {1, 5, 10};
  auto [ab, ba] = evaluate_retrieval(ex, ey, ks);
  return {std::move(ab), std::move(ba), similarity_histograms(ex, ey, bins), std::move(fitted.log)};
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd m;
  if (values.empty()) return m;
  for (double v : values) m.mean += v;
  m.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return m;
}

std::string format_mean_std(const MeanStd& m) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f±%.2f", m.mean, m.stddev);
  return buf;
}

std::vector<GradCheckRow> run_gradcheck_suite(std::size_t n_configs, std::uint64_t seed, double h) {
  // 16 CrossCLR flag variants (batch and queue) plus the four other kinds.
  constexpr std::size_t kVariants = 20;
  std::vector<GradCheckRow> rows;
  for (std::size_t i = 0; i < n_configs; ++i) {
    const std::size_t variant = i % kVariants;
    GradCheckRow row;
    row.index = i;
    for (std::uint64_t attempt = 0;; ++attempt) {
      std::mt19937_64 rng(seed * 1000003ULL + i * 131ULL + attempt);
      std::uniform_int_distribution<std::size_t> n_dist(4, 16), d_dist(4, 32);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const std::size_t n = n_dist(rng), d = d_dist(rng), d_in = d_dist(rng);
      const EmbeddingBatch zx(gaussian(n, d, rng)), zy(gaussian(n, d, rng));
      // Offset inputs so connectivity is positive (max_relative / sum_to_one).
      const EmbeddingBatch in_x(gaussian(n, d_in, rng, 0.7, 0.5)), in_y(gaussian(n, d_in, rng, 0.7, 0.5));

      LossConfig cfg;
      const double taus[] = {0.03, 0.1, 0.5};
      cfg.tau = taus[std::uniform_int_distribution<int>(0, 2)(rng)];
      cfg.lambda_intra = 0.3 + 1.7 * unit(rng);
      cfg.gamma = 0.6 + 0.35 * unit(rng);
      if (unit(rng) < 0.25) {
        cfg.reduction = Reduction::literal_mean;
        cfg.kappa = 0.05;
      }
      row.n = n;
      row.dim = d;

      LossClosure closure;
      std::optional<MemoryQueue> queue;
      Matrix proj_x, proj_y;
      if (variant < 16) {
        cfg.pruning_enabled = variant & 1;
        cfg.weighting_enabled = variant & 2;
        cfg.intra_enabled = variant & 4;
        const bool queued = variant >= 8;
        row.variant = std::string(queued ? "crossclr_queue" : "crossclr_batch") +
                      "[NP=" + std::to_string(variant & 1) + " PW=" + std::to_string((variant >> 1) & 1) +
                      " IM=" + std::to_string((variant >> 2) & 1) + "]";
        if (!queued) {
          closure = [=](const EmbeddingBatch& a, const EmbeddingBatch& b) {
            return crossclr_batch(a, b, in_x, in_y, cfg);
          };
        } else {
          const std::size_t capacity = std::uniform_int_distribution<std::size_t>(n, 32)(rng);
          queue.emplace(capacity, d_in, d_in);
          const std::size_t prefill = std::uniform_int_distribution<std::size_t>(0, capacity)(rng);
          if (prefill > 0) {
            queue->enqueue(EmbeddingBatch(gaussian(prefill, d_in, rng, 0.7, 0.5)),
                           EmbeddingBatch(gaussian(prefill, d_in, rng, 0.7, 0.5)));
          }
          queue->enqueue(in_x, in_y);
          cfg.queue_min_fill = unit(rng) < 0.8 ? 1 : 0;
          proj_x = gaussian(d, d_in, rng);
          proj_y = gaussian(d, d_in, rng);
          closure = [=, q = *queue](const EmbeddingBatch& a, const EmbeddingBatch& b) {
            const Projector px = [&](const EmbeddingBatch& in) {
              return l2_normalize(EmbeddingBatch(inner_products(in.data(), proj_x)));
            };
            const Projector py = [&](const EmbeddingBatch& in) {
              return l2_normalize(EmbeddingBatch(inner_products(in.data(), proj_y)));
            };
            return crossclr_queue(a, b, in_x, in_y, q, px, py, cfg);
          };
        }
      } else if (variant == 16) {
        row.variant = "crossclr_multipos";
        cfg.gamma = 0.3 + 0.4 * unit(rng);
        const auto count = [&](const EmbeddingBatch& in) {
          const Mask m = influential_mask(connectivity(in, in, true), cfg.gamma, cfg.threshold_mode);
          return static_cast<std::size_t>(std::count(m.begin(), m.end(), true));
        };
        cfg.top_k = std::min<std::size_t>({2, count(in_x), count(in_y)});
        cfg.beta = 0.1 + 0.2 * unit(rng);
        closure = [=](const EmbeddingBatch& a, const EmbeddingBatch& b) {
          return crossclr_multipos(a, b, in_x, in_y, cfg);
        };
      } else if (variant == 17) {
        row.variant = "ntxent";
        closure = [tau = cfg.tau](const EmbeddingBatch& a, const EmbeddingBatch& b) { return ntxent(a, b, tau); };
      } else if (variant == 18) {
        row.variant = "clip";
        closure = [tau = cfg.tau](const EmbeddingBatch& a, const EmbeddingBatch& b) {
          return clip_symmetric(a, b, tau);
        };
      } else {
        row.variant = "max_margin";
        const double margin = 0.1 + 0.3 * unit(rng);
        closure = [margin](const EmbeddingBatch& a, const EmbeddingBatch& b) { return max_margin(a, b, margin); };
      }

      try {
        row.max_error = finite_diff_check(closure, zx, zy, {h, seed + i, 0});
        break;
      } catch (const Error& e) {
        // Total pruning can leave an anchor without negatives; redraw.
        if (e.kind() != ErrorKind::InsufficientNegatives || attempt >= 16) throw;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

json run_gen(const ExperimentConfig& c, const fs::path& out_dir) {
  ExperimentConfig gen = c;
  gen.dataset.clear();
  const PairedEmbeddingDataset ds = load_or_generate(gen);
  const fs::path manifest = out_dir / "dataset.json";
  save_dataset(ds, manifest);
  json splits = json::object();
  for (const auto& [name, r] : ds.splits) splits[name] = {r.begin, r.end};
  return {{"manifest", manifest.filename().string()},
          {"count", ds.size()},
          {"d_x", ds.x.cols()},
          {"d_y", ds.y.cols()},
          {"splits", splits}};
}

json run_train(const ExperimentConfig& c, const fs::path& out_dir) {
  const PairedEmbeddingDataset ds = load_or_generate(c);
  TrainConfig t = c.train;
  t.seed = c.require_seed();
  const FitResult fitted = fit(t, ds.split("train"), ds.split("val"));
  const fs::path ckpt = resolve_in(out_dir, c.checkpoint);
  save_checkpoint(fitted.state, ckpt);
  const auto [vx, vy] = embed_dataset(fitted.state, ds.split("val"));
  const auto [ab, ba] = evaluate_retrieval(vx, vy, c.ks);
  return {{"checkpoint", ckpt.filename().string()}, {"epochs", fitted.log}, {"val", {ab, ba}}};
}

json run_eval(const ExperimentConfig& c, const fs::path& out_dir) {
  fs::path ckpt(c.checkpoint);
  if (!fs::exists(ckpt) && ckpt.is_relative()) ckpt = out_dir / ckpt;
  if (!fs::exists(ckpt)) throw Error(ErrorKind::PathError, "checkpoint not found: " + c.checkpoint);
  const TrainState state = load_checkpoint(ckpt);
  const PairedEmbeddingDataset ds = load_or_generate(c).split(c.split);
  const auto [ex, ey] = embed_dataset(state, ds);
  const auto [ab, ba] = evaluate_retrieval(ex, ey, c.ks);
  return {{"split", c.split}, {"retrieval", {ab, ba}}, {"histogram", similarity_histograms(ex, ey, c.bins)}};
}

json run_gradcheck(const ExperimentConfig& c) {
  const auto rows = run_gradcheck_suite(c.gradcheck_configs, c.require_seed(), c.gradcheck_h);
  json table = json::array();
  double worst = 0.0;
  for (const auto& r : rows) {
    worst = std::max(worst, r.max_error);
    table.push_back({{"index", r.index},
                     {"variant", r.variant},
                     {"n", r.n},
                     {"dim", r.dim},
                     {"max_error", r.max_error},
                     {"pass", r.max_error < c.gradcheck_tolerance}});
  }
  return {{"rows", table}, {"max_error", worst}, {"tolerance", c.gradcheck_tolerance},
          {"pass", worst < c.gradcheck_tolerance}};
}

json run_compare(const ExperimentConfig& c) {
  std::vector<std::pair<std::string, TrainConfig>> rows;
  for (LossKind kind : c.losses) rows.emplace_back(std::string(to_string(kind)), cell_config(c, kind, 0));
  return {{"rows", run_rows(c, rows)}};
}

json run_ablate(const ExperimentConfig& c) {
  std::vector<std::pair<std::string, TrainConfig>> rows;
  for (int bits = 0; bits < 8; ++bits) {
    TrainConfig t = cell_config(c, LossKind::crossclr, 0);
    const bool pw = bits & 1, im = bits & 2, np = bits & 4;
    t.loss_config.weighting_enabled = pw;
    t.loss_config.intra_enabled = im;
    t.loss_config.pruning_enabled = np;
    rows.emplace_back("PW=" + std::to_string(pw) + " IM=" + std::to_string(im) + " NP=" + std::to_string(np), t);
  }
  return {{"rows", run_rows(c, rows)}};
}

json run_sweep(const ExperimentConfig& c) {
  std::vector<std::pair<std::string, TrainConfig>> gamma_rows, kappa_rows;
  for (double g : c.gammas) {
    TrainConfig t = cell_config(c, LossKind::crossclr, 0);
    t.loss_config.gamma = g;
    gamma_rows.emplace_back(std::to_string(g), t);
  }
  for (double k : c.kappas) {
    TrainConfig t = cell_config(c, LossKind::crossclr, 0);
    t.loss_config.kappa = k;
    kappa_rows.emplace_back(std::to_string(k), t);
  }
  const auto series = [&](const std::vector<double>& values, const std::vector<std::pair<std::string, TrainConfig>>& rows) {
    json s = json::array();
    const json results = run_rows(c, rows);
    for (std::size_t i = 0; i < values.size(); ++i)
      s.push_back({{"value", values[i]}, {"summary", results[i].at("summary")}, {"cells", results[i].at("cells")}});
    return s;
  };
  return {{"gamma", series(c.gammas, gamma_rows)}, {"kappa", series(c.kappas, kappa_rows)}};
}

std::string format_table(const json& report) {
  static const std::vector<std::pair<std::string, std::string>> columns = {
      {"r1_ab", "A->B R@1"}, {"r5_ab", "A->B R@5"}, {"r10_ab", "A->B R@10"},
      {"r1_ba", "B->A R@1"}, {"r5_ba", "B->A R@5"}, {"r10_ba", "B->A R@10"}};
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header = {"row"};
  for (const auto& [key, title] : columns) header.push_back(title);
  cells.push_back(header);
  for (const auto& row : report.at("rows")) {
    std::vector<std::string> line = {row.at("name").get<std::string>()};
    for (const auto& [key, title] : columns) line.push_back(row.at("summary").at(key).at("text").get<std::string>());
    cells.push_back(line);
  }
  // Width in code points; the ± sign is two bytes in UTF-8.
  const auto width = [](const std::string& s) {
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char ch) { return (ch & 0xC0) != 0x80; }));
  };
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& line : cells)
    for (std::size_t k = 0; k < line.size(); ++k) widths[k] = std::max(widths[k], width(line[k]));
  std::ostringstream out;
  for (const auto& line : cells) {
    for (std::size_t k = 0; k < line.size(); ++k) {
      out << line[k] << std::string(widths[k] - width(line[k]) + (k + 1 < line.size() ? 2 : 0), ' ');
    }
    out << '\n';
  }
  return out.str();
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnknownCommand: return kExitUnknownCommand;
    case ErrorKind::ConfigParseError: return kExitConfigError;
    case ErrorKind::PathError: return kExitPathError;
    default: return kExitRuntimeError;
  }
}

CommandOutcome run_command(const std::string& command, const ExperimentConfig& c, const fs::path& out_dir) {
  static const std::vector<std::string> known = {"gen", "train", "eval", "gradcheck", "compare", "ablate", "sweep"};
  if (std::find(known.begin(), known.end(), command) == known.end()) {
    throw Error(ErrorKind::UnknownCommand, "'" + command + "'");
  }
  c.require_seed();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw Error(ErrorKind::PathError, "cannot create " + out_dir.string());

  json results;
  if (command == "gen") results = run_gen(c, out_dir);
  else if (command == "train") results = run_train(c, out_dir);
  else if (command == "eval") results = run_eval(c, out_dir);
  else if (command == "gradcheck") results = run_gradcheck(c);
  else if (command == "compare") results = run_compare(c);
  else if (command == "ablate") results = run_ablate(c);
  else results = run_sweep(c);

  CommandOutcome outcome;
  outcome.report = {{"command", command}, {"config", to_json(c)}, {"results", results}};
  if (command == "gradcheck" && !results.at("pass").get<bool>()) outcome.exit_code = kExitCheckFailed;

  const std::string stamp = utc_timestamp();
  std::string name = command + "." + stamp + ".json";
  for (int k = 1; fs::exists(out_dir / name); ++k) name = command + "." + stamp + "-" + std::to_string(k) + ".json";
  outcome.report_path = out_dir / name;
  write_text(outcome.report_path, outcome.report.dump(2) + "\n");
  if (command == "compare" || command == "ablate") {
    write_text(out_dir / (outcome.report_path.stem().string() + ".txt"), format_table(results));
  }

  const fs::path latest_path = out_dir / "latest.json";
  json latest = json::object();
  if (fs::exists(latest_path)) {
    std::ifstream in(latest_path);
    latest = json::parse(in, nullptr, false);
    if (!latest.is_object()) latest = json::object();
  }
  latest[command] = name;
  write_text(latest_path, latest.dump(2) + "\n");
  return outcome;
}

}  // namespace crossclr
