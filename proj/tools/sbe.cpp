// Command-line front end: data generation, encoder fitting, training,
// cross-validation, sweeps, diagnostics and importance tables.
//
// Settings come from an optional JSON document (--config); command-line flags
// override it. Exit status: 0 success, 1 configuration error, 2 runtime error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sbe/baseline.hpp"
#include "sbe/dataset.hpp"
#include "sbe/diagnostics.hpp"
#include "sbe/encoder.hpp"
#include "sbe/learner.hpp"
#include "sbe/parallel.hpp"
#include "sbe/validation.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace sbe;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Typed access to the merged settings document

std::string join_path(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

template <class T>
T field(const json& obj, const std::string& parent, const std::string& key, T fallback) {
  if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) return fallback;
  const json& v = obj.at(key);
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned()) throw ConfigError("expected a non-negative integer");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError("expected a number");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("expected true or false");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("expected a string");
    }
    return v.get<T>();
  } catch (const std::exception& e) {
    throw ConfigError("config field '" + join_path(parent, key) + "': " + e.what());
  }
}

const json& section(const json& doc, const std::string& key) {
  static const json empty = json::object();
  if (!doc.contains(key)) return empty;
  if (!doc.at(key).is_object()) throw ConfigError("config field '" + key + "': expected an object");
  return doc.at(key);
}

template <class F>
auto checked(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config field '" + where + "': " + e.what());
  }
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  try {
    json doc = json::parse(text);
    if (!doc.is_object()) throw ConfigError(path + ": top level must be an object");
    return doc;
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min(e.byte, text.size()); ++i) line += text[i] == '\n';
    throw ConfigError(path + ":" + std::to_string(line) + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Flags. Every flag is optional; present flags are written into the document.

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::string> output_dir;

  // data
  std::optional<std::string> data, target, task, categorical;
  // generator
  std::optional<std::string> kind;
  std::optional<std::size_t> rows, features, informative, n_categorical, min_bins, max_bins, clusters;
  std::optional<double> class_sep, flip_y, noise;
  // encoder
  std::optional<std::string> encoder_type, mapping, unseen_policy, draw_mode;
  std::optional<double> gamma, sigma;
  std::optional<std::size_t> k_draws;
  std::optional<bool> loo;
  // baseline (importance)
  std::optional<double> baseline_sigma;
  std::optional<bool> baseline_loo;
  // learner
  std::optional<std::string> learner;
  std::optional<std::size_t> trees, max_depth, min_leaf, mtry, epochs;
  std::optional<double> lambda, learning_rate;
  // validation
  std::optional<std::string> metric;
  std::optional<std::size_t> folds;
  // sweep
  std::optional<std::string> param, values;
  // diagnose
  std::optional<std::string> draws;
  std::optional<std::size_t> laplace_draws;
  std::optional<std::string> column;
  // io
  std::optional<std::string> out, model;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

template <class T>
void put(json& doc, std::initializer_list<const char*> path, const std::optional<T>& value) {
  if (!value) return;
  json* node = &doc;
  auto it = path.begin();
  for (; std::next(it) != path.end(); ++it) {
    if (!node->contains(*it) || !(*node)[*it].is_object()) (*node)[*it] = json::object();
    node = &(*node)[*it];
  }
  (*node)[*it] = *value;
}

void apply_flags(json& doc, const Flags& f) {
  put(doc, {"seed"}, f.seed);
  put(doc, {"threads"}, f.threads);
  put(doc, {"output_dir"}, f.output_dir);

  put(doc, {"data", "csv"}, f.data);
  put(doc, {"data", "target"}, f.target);
  put(doc, {"data", "task"}, f.task);
  if (f.categorical) doc["data"]["categorical"] = split_list(*f.categorical);

  put(doc, {"generator", "kind"}, f.kind);
  put(doc, {"generator", "n_rows"}, f.rows);
  put(doc, {"generator", "n_features"}, f.features);
  put(doc, {"generator", "n_informative"}, f.informative);
  put(doc, {"generator", "n_categorical"}, f.n_categorical);
  put(doc, {"generator", "min_bins"}, f.min_bins);
  put(doc, {"generator", "max_bins"}, f.max_bins);
  put(doc, {"generator", "clusters_per_class"}, f.clusters);
  put(doc, {"generator", "class_sep"}, f.class_sep);
  put(doc, {"generator", "flip_y"}, f.flip_y);
  put(doc, {"generator", "noise"}, f.noise);

  put(doc, {"encoder", "type"}, f.encoder_type);
  put(doc, {"encoder", "gamma"}, f.gamma);
  put(doc, {"encoder", "k_draws"}, f.k_draws);
  put(doc, {"encoder", "mapping"}, f.mapping);
  put(doc, {"encoder", "unseen_policy"}, f.unseen_policy);
  put(doc, {"encoder", "draw_mode"}, f.draw_mode);
  put(doc, {"encoder", "noise_sigma"}, f.sigma);
  put(doc, {"encoder", "leave_one_out"}, f.loo);

  put(doc, {"baseline", "noise_sigma"}, f.baseline_sigma);
  put(doc, {"baseline", "leave_one_out"}, f.baseline_loo);

  put(doc, {"learner", "kind"}, f.learner);
  put(doc, {"learner", "n_trees"}, f.trees);
  put(doc, {"learner", "max_depth"}, f.max_depth);
  put(doc, {"learner", "min_leaf"}, f.min_leaf);
  put(doc, {"learner", "features_per_split"}, f.mtry);
  put(doc, {"learner", "epochs"}, f.epochs);
  put(doc, {"learner", "lambda"}, f.lambda);
  put(doc, {"learner", "learning_rate"}, f.learning_rate);

  put(doc, {"metric"}, f.metric);
  put(doc, {"folds"}, f.folds);

  put(doc, {"sweep", "param"}, f.param);
  if (f.values) doc["sweep"]["values"] = split_list(*f.values);

  if (f.draws) {
    json list = json::array();
    for (const auto& d : split_list(*f.draws)) {
      try {
        list.push_back(std::stoull(d));
      } catch (const std::exception&) {
        throw ConfigError("--draws: '" + d + "' is not a count");
      }
    }
    doc["diagnose"]["draws"] = list;
  }
  put(doc, {"diagnose", "laplace_draws"}, f.laplace_draws);
  put(doc, {"diagnose", "column"}, f.column);
}

// ---------------------------------------------------------------------------
// Settings built from the document

struct DataSource {
  std::optional<std::string> csv;
  CsvSchema schema;
  bool schema_given = false;
  GeneratorSpec generator;
};

struct Settings {
  std::uint64_t seed = 0;
  fs::path output_dir = ".";
  DataSource data;
  EncoderChoice encoder = EncoderConfig{};
  TargetMeanOptions baseline;
  LearnerSpec learner = ForestSpec{};
  bool learner_given = false;
  std::optional<Metric> metric;
  std::size_t folds = 5;
};

GeneratorSpec generator_spec(const json& doc, std::uint64_t seed) {
  const json& g = section(doc, "generator");
  const std::string p = "generator";
  GeneratorSpec s;
  s.kind = checked(p + ".kind", [&] { return parse_generator_kind(field<std::string>(g, p, "kind", "classification_blobs")); });
  s.n_rows = field(g, p, "n_rows", s.n_rows);
  s.n_features = field(g, p, "n_features", s.n_features);
  s.n_informative = field(g, p, "n_informative", s.n_informative);
  s.n_categorical = field(g, p, "n_categorical", s.n_categorical);
  s.min_bins = field(g, p, "min_bins", s.min_bins);
  s.max_bins = field(g, p, "max_bins", s.max_bins);
  s.categorical_columns = field(g, p, "categorical_columns", s.categorical_columns);
  s.class_sep = field(g, p, "class_sep", s.class_sep);
  s.flip_y = field(g, p, "flip_y", s.flip_y);
  s.clusters_per_class = field(g, p, "clusters_per_class", s.clusters_per_class);
  s.noise = field(g, p, "noise", s.noise);
  s.seed = field(g, p, "seed", seed);
  checked(p, [&] {
    s.validate();
    return 0;
  });
  return s;
}

EncoderChoice encoder_choice(const json& doc, const std::string& key, std::uint64_t seed, bool baseline) {
  const json& e = section(doc, key);
  const std::string type = field<std::string>(e, key, "type", baseline ? "target_mean" : "sampling");
  if (type == "target_mean") {
    TargetMeanOptions o;
    o.leave_one_out = field(e, key, "leave_one_out", o.leave_one_out);
    o.noise_sigma = field(e, key, "noise_sigma", o.noise_sigma);
    o.seed = field(e, key, "seed", seed);
    checked(key, [&] {
      o.validate();
      return 0;
    });
    return o;
  }
  if (type != "sampling") throw ConfigError("config field '" + key + ".type': expected sampling or target_mean");
  EncoderConfig c;
  c.gamma = field(e, key, "gamma", c.gamma);
  c.k_draws = field(e, key, "k_draws", c.k_draws);
  c.mapping = checked(key + ".mapping", [&] { return parse_mapping(field<std::string>(e, key, "mapping", "mean_only")); });
  c.unseen_policy = checked(key + ".unseen_policy", [&] {
    return parse_unseen_policy(field<std::string>(e, key, "unseen_policy", "sample_from_prior"));
  });
  c.draw_mode = checked(key + ".draw_mode", [&] { return parse_draw_mode(field<std::string>(e, key, "draw_mode", "sample")); });
  c.seed = field(e, key, "seed", seed);
  checked(key, [&] {
    c.validate();
    return 0;
  });
  return c;
}

LearnerSpec learner_spec(const json& doc, std::uint64_t seed) {
  const json& l = section(doc, "learner");
  const std::string p = "learner";
  const std::string kind = field<std::string>(l, p, "kind", "random_forest");
  LearnerSpec spec;
  if (kind == "ridge") {
    spec = RidgeSpec{field(l, p, "lambda", 0.0)};
  } else if (kind == "logistic") {
    LogisticSpec s;
    s.learning_rate = field(l, p, "learning_rate", s.learning_rate);
    s.epochs = field(l, p, "epochs", s.epochs);
    s.lambda = field(l, p, "lambda", s.lambda);
    spec = s;
  } else if (kind == "random_forest") {
    ForestSpec s;
    s.n_trees = field(l, p, "n_trees", s.n_trees);
    s.max_depth = field(l, p, "max_depth", s.max_depth);
    s.min_leaf = field(l, p, "min_leaf", s.min_leaf);
    s.features_per_split = field(l, p, "features_per_split", s.features_per_split);
    s.max_bins = field(l, p, "max_bins", s.max_bins);
    s.bootstrap = field(l, p, "bootstrap", s.bootstrap);
    s.seed = field(l, p, "seed", seed);
    spec = s;
  } else {
    throw ConfigError("config field 'learner.kind': expected ridge, logistic or random_forest");
  }
  checked(p, [&] {
    validate(spec);
    return 0;
  });
  return spec;
}

CsvSchema sidecar_schema(const fs::path& csv) {
  const fs::path path = csv.string() + ".schema.json";
  if (!fs::exists(path)) {
    throw ConfigError("no schema for " + csv.string() + ": pass --target/--task/--categorical or provide " +
                      path.string());
  }
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const std::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  const std::string p = path.filename().string();
  CsvSchema s;
  s.target = field<std::string>(j, p, "target", "");
  s.task = checked(p + ".task", [&] { return parse_task(field<std::string>(j, p, "task", "binary")); });
  s.categorical = field(j, p, "categorical", std::vector<std::string>{});
  return s;
}

json schema_json(const CsvSchema& s) {
  json j;
  j["target"] = s.target;
  j["task"] = std::string(to_string(s.task));
  j["categorical"] = s.categorical;
  return j;
}

Settings build_settings(const json& doc) {
  Settings s;
  s.seed = field<std::uint64_t>(doc, "", "seed", 0);
  const std::size_t threads = field<std::size_t>(doc, "", "threads", 0);
  set_max_threads(static_cast<unsigned>(threads));
  if (const char* env = std::getenv("SBE_OUTPUT_DIR"); env && *env) s.output_dir = env;
  s.output_dir = field<std::string>(doc, "", "output_dir", s.output_dir.string());

  const json& d = section(doc, "data");
  if (d.contains("csv")) s.data.csv = field<std::string>(d, "data", "csv", "");
  if (d.contains("target") || d.contains("task") || d.contains("categorical")) {
    s.data.schema_given = true;
    s.data.schema.target = field<std::string>(d, "data", "target", "y");
    s.data.schema.task = checked("data.task", [&] { return parse_task(field<std::string>(d, "data", "task", "binary")); });
    s.data.schema.categorical = field(d, "data", "categorical", std::vector<std::string>{});
  }
  s.data.generator = generator_spec(doc, s.seed);

  s.encoder = encoder_choice(doc, "encoder", s.seed, false);
  s.baseline = std::get<TargetMeanOptions>(encoder_choice(doc, "baseline", s.seed, true));
  s.learner_given = doc.contains("learner") && section(doc, "learner").contains("kind");
  s.learner = learner_spec(doc, s.seed);
  if (doc.contains("metric")) {
    s.metric = checked("metric", [&] { return parse_metric(field<std::string>(doc, "", "metric", "")); });
  }
  s.folds = field(doc, "", "folds", s.folds);
  if (s.folds < 2) throw ConfigError("config field 'folds': must be at least 2");
  return s;
}

// ---------------------------------------------------------------------------
// Helpers used while running

fs::path output_path(const Settings& s, const std::optional<std::string>& out, const std::string& fallback) {
  fs::path p = out ? fs::path(*out) : fs::path(fallback);
  if (p.is_relative()) p = s.output_dir / p;
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p;
}

Dataset load_data(const Settings& s) {
  if (!s.data.csv) return generate(s.data.generator);
  const CsvSchema schema = s.data.schema_given ? s.data.schema : sidecar_schema(*s.data.csv);
  return read_csv(*s.data.csv, schema);
}

Metric metric_for(const Settings& s, Task task) {
  if (s.metric) {
    if ((*s.metric == Metric::r2) != (task == Task::regression)) {
      throw ConfigError("config field 'metric': " + std::string(to_string(*s.metric)) + " does not fit a " +
                        std::string(to_string(task)) + " target");
    }
    return *s.metric;
  }
  return task == Task::regression ? Metric::r2 : Metric::accuracy;
}

std::string format_row(std::initializer_list<std::string> cells) {
  std::string line;
  for (const auto& c : cells) {
    if (!line.empty()) line += ',';
    line += quote_field(c);
  }
  return line + '\n';
}

std::string format_encoded_csv(const EncodedDataset& enc, const std::string& target_name) {
  std::string out = "origin_row,draw";
  for (const auto& n : enc.feature_names) out += ',' + quote_field(n);
  out += ',' + quote_field(target_name) + '\n';
  for (std::size_t r = 0; r < enc.rows(); ++r) {
    out += std::to_string(enc.origin_row[r]) + ',' + std::to_string(enc.draw_index[r]);
    for (Eigen::Index j = 0; j < enc.features.cols(); ++j) {
      out += ',' + format_number(enc.features(static_cast<Eigen::Index>(r), j));
    }
    out += ',' + format_number(enc.target[r]) + '\n';
  }
  return out;
}

// Trained pipeline bundle: a sampling encoder plus a learner.
constexpr const char* kBundleFormat = "sbe-pipeline";

std::string bundle_text(const EncoderModel& encoder, const Model& model) {
  json j;
  j["format"] = kBundleFormat;
  j["version"] = 1;
  j["encoder"] = json::parse(encoder.serialize());
  j["learner"] = json::parse(serialize_model(model));
  return j.dump(1) + '\n';
}

std::pair<EncoderModel, Model> read_bundle(const fs::path& path) {
  const json j = json::parse(read_file(path));
  if (j.value("format", "") != kBundleFormat) throw std::runtime_error(path.string() + " is not a pipeline bundle");
  return {EncoderModel::deserialize(j.at("encoder").dump()), deserialize_model(j.at("learner").dump())};
}

// ---------------------------------------------------------------------------
// Commands. Each returns the runner executed after configuration succeeded.

using Runner = std::function<void()>;

Runner cmd_gen_data(const Settings& s, const Flags& f) {
  return [=] {
    const Dataset data = generate(s.data.generator);
    const fs::path out = output_path(s, f.out, "data.csv");
    write_csv(data, out);
    write_file_atomic(out.string() + ".schema.json", schema_json(schema_of(data)).dump(1) + '\n');
    std::cout << "wrote " << data.rows() << " rows to " << out.string() << '\n';
  };
}

EncoderConfig sampling_config(const Settings& s, const char* command) {
  const auto* c = std::get_if<EncoderConfig>(&s.encoder);
  if (!c) throw ConfigError(std::string(command) + " needs the sampling encoder (encoder.type = sampling)");
  return *c;
}

Runner cmd_fit(const Settings& s, const Flags& f) {
  const EncoderConfig config = sampling_config(s, "fit");
  return [=] {
    const EncoderModel model = fit(load_data(s), config);
    const fs::path out = output_path(s, f.out, "encoder.json");
    write_file_atomic(out, model.serialize());
    std::cout << "wrote encoder to " << out.string() << '\n';
  };
}

Runner cmd_transform(const Settings& s, const Flags& f) {
  if (!f.model) throw ConfigError("transform needs --model");
  return [=] {
    const EncoderModel model = EncoderModel::deserialize(read_file(*f.model));
    const std::size_t k = f.k_draws.value_or(model.config.k_draws);
    const EncodedDataset enc = transform_augment(model, load_data(s), k);
    const fs::path out = output_path(s, f.out, "encoded.csv");
    write_file_atomic(out, format_encoded_csv(enc, model.target_name));
    std::cout << "wrote " << enc.rows() << " encoded rows to " << out.string() << '\n';
  };
}

Runner cmd_train(const Settings& s, const Flags& f) {
  const EncoderConfig config = sampling_config(s, "train");
  return [=] {
    const Dataset data = load_data(s);
    const FittedPipeline fitted = fit_pipeline({config, s.learner}, data);
    const fs::path out = output_path(s, f.out, "model.json");
    write_file_atomic(out, bundle_text(std::get<EncoderModel>(fitted.encoder), fitted.learner));
    std::cout << "wrote pipeline to " << out.string() << '\n';
  };
}

Runner cmd_evaluate(const Settings& s, const Flags& f) {
  return [=] {
    const Dataset data = load_data(s);
    const Metric metric = metric_for(s, data.task());
    const fs::path out = output_path(s, f.out, "evaluate.csv");
    std::string text;
    if (f.model) {
      auto [encoder, model] = read_bundle(*f.model);
      const BatchPredictor predictor = [&](const Eigen::MatrixXd& x) { return predict(model, x); };
      const Eigen::MatrixXd pred = predict_average(encoder, predictor, data, encoder.config.k_draws);
      std::vector<double> labels = encoder.class_labels;
      if (encoder.task == Task::binary) labels = {0.0, 1.0};
      const double value = score(metric, pred, data.target(), labels);
      text = "rows," + std::string(to_string(metric)) + '\n' + std::to_string(data.rows()) + ',' +
             format_number(value) + '\n';
    } else {
      const Pipeline pipeline{s.encoder, s.learner};
      const CvResult cv = cross_validate(pipeline, data, s.folds, metric, s.seed);
      text = "fold," + std::string(to_string(metric)) + '\n';
      for (std::size_t i = 0; i < cv.fold_scores.size(); ++i) {
        text += std::to_string(i) + ',' + format_number(cv.fold_scores[i]) + '\n';
      }
      std::cout << to_string(metric) << " " << format_number(cv.mean) << " +- " << format_number(cv.stddev) << '\n';
    }
    write_file_atomic(out, text);
  };
}

Runner cmd_sweep(const Settings& s, const Flags& f, const json& doc) {
  const json& sw = section(doc, "sweep");
  const SweepParam param =
      checked("sweep.param", [&] { return parse_sweep_param(field<std::string>(sw, "sweep", "param", "")); });
  std::vector<std::string> values;
  if (sw.contains("values")) {
    if (!sw.at("values").is_array()) throw ConfigError("config field 'sweep.values': expected a list");
    for (const auto& v : sw.at("values")) values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
  }
  if (values.empty()) throw ConfigError("config field 'sweep.values': needs at least one value");
  // Reject bad values before any work starts.
  const Pipeline base{s.encoder, s.learner};
  for (const auto& v : values) checked("sweep.values", [&] { return with_param(base, param, v); });
  return [=] {
    const Dataset data = load_data(s);
    const Metric metric = metric_for(s, data.task());
    const auto rows = sweep({s.encoder, s.learner}, data, param, values, s.folds, metric, s.seed);
    std::string text = std::string(sweep_column(param)) + ",mean_metric,std_metric\n";
    for (const auto& r : rows) {
      text += quote_field(r.value) + ',' + format_number(r.result.mean) + ',' + format_number(r.result.stddev) + '\n';
    }
    write_file_atomic(output_path(s, f.out, "sweep.csv"), text);
  };
}

// Learner output seen as a function of one column's posterior parameters,
// everything else in the row held at its posterior-mean encoding.
struct ThetaModel {
  const EncoderModel* encoder;
  const Model* learner;
  Eigen::MatrixXd row;  // 1 x features
  std::size_t offset = 0;
  ConjugateParams posterior;

  double operator()(std::span<const double> theta) const {
    Eigen::MatrixXd x = row;
    const auto feats = apply_mapping(encoder->config.mapping, draw_from_theta(encoder->task, theta), posterior);
    for (std::size_t j = 0; j < feats.size(); ++j) x(0, static_cast<Eigen::Index>(offset + j)) = feats[j];
    const Eigen::MatrixXd out = predict(*learner, x);
    return encoder->task == Task::regression ? out(0, 0) : out(0, out.cols() - 1);
  }
};

Runner cmd_diagnose(const Settings& s, const Flags& f, const json& doc) {
  const EncoderConfig config = sampling_config(s, "diagnose");
  const json& dg = section(doc, "diagnose");
  const auto draws = field(dg, "diagnose", "draws", std::vector<std::size_t>{100, 1000});
  for (std::size_t d : draws) {
    if (d < 2) throw ConfigError("config field 'diagnose.draws': every count must be at least 2");
  }
  const std::size_t laplace_draws = field<std::size_t>(dg, "diagnose", "laplace_draws", 10000);
  const std::string column = field<std::string>(dg, "diagnose", "column", "");
  const double sigma = field(dg, "diagnose", "noise_sigma", 0.1);
  LearnerSpec learner = s.learner;
  if (!s.learner_given) learner = RidgeSpec{1e-6};
  if (std::holds_alternative<ForestSpec>(learner)) {
    throw ConfigError("diagnose needs a smooth learner (ridge or logistic)");
  }
  return [=] {
    const Dataset data = load_data(s);
    LearnerSpec spec = learner;
    if (!s.learner_given && data.task() != Task::regression) spec = LogisticSpec{};
    const FittedPipeline fitted = fit_pipeline({config, spec}, data);
    const auto& encoder = std::get<EncoderModel>(fitted.encoder);
    const BatchPredictor predictor = [&](const Eigen::MatrixXd& x) { return predict(fitted.learner, x); };
    const fs::path dir = output_path(s, f.out, "diagnose");
    fs::create_directories(dir);
    std::ostringstream summary;
    summary << "task " << to_string(data.task()) << ", " << data.rows() << " rows, learner "
            << learner_name(spec) << ", mapping " << to_string(config.mapping) << ", gamma "
            << format_number(config.gamma) << "\n\n";

    if (encoder.columns.empty()) throw std::runtime_error("diagnose needs at least one categorical column");
    std::size_t col = 0;
    if (!column.empty()) {
      while (col < encoder.columns.size() && encoder.columns[col].name != column) ++col;
      if (col == encoder.columns.size()) throw std::runtime_error("no categorical column '" + column + "'");
    }
    const ColumnPosteriors& cp = encoder.columns[col];

    if (data.task() == Task::regression) {
      std::string text;
      summary << "loss decomposition (mse_total = mse0 + reg + residual)\n";
      for (std::size_t d : draws) {
        const DecompositionReport r = mse_decompose(encoder, predictor, data, d);
        const std::string csv = format_decomposition_csv(r);
        text += text.empty() ? csv : csv.substr(csv.find('\n') + 1);
        summary << "  draws " << d << ": mse_total " << format_number(r.mse_total) << ", mse0 "
                << format_number(r.mse0) << ", reg " << format_number(r.reg) << ", residual "
                << format_number(r.residual) << '\n';
      }
      write_file_atomic(dir / "decomposition.csv", text);
      summary << '\n';
    }

    if (data.task() != Task::multiclass) {
      // Reference row per category: its first occurrence.
      EncoderModel mean_model = encoder;
      mean_model.config.draw_mode = DrawMode::posterior_mean;
      const EncodedDataset base = transform_augment(mean_model, data, 1);
      const auto first = std::find_if(base.feature_origin.begin(), base.feature_origin.end(),
                                      [&](std::size_t o) { return base.origin_names[o] == cp.name; });
      const auto offset = static_cast<std::size_t>(first - base.feature_origin.begin());
      const auto labels = data.column(data.find(cp.name)).labels;
      std::vector<std::string> names;
      std::vector<LaplaceEstimate> estimates;
      std::vector<double> reference;
      const std::uint64_t master = stream_seed(config.seed, 23);
      for (std::size_t c = 0; c < cp.categories.size(); ++c) {
        const auto row = static_cast<Eigen::Index>(
            std::find(labels.begin(), labels.end(), cp.categories[c]) - labels.begin());
        const ThetaModel model{&encoder, &fitted.learner, base.features.row(row), offset, cp.posteriors[c]};
        if (!is_proper(cp.posteriors[c]) ||
            (data.task() == Task::regression && std::get<NormalGammaParams>(cp.posteriors[c]).alpha <= 1.0)) {
          continue;  // no finite posterior covariance
        }
        estimates.push_back(laplace_predict(std::cref(model), cp.posteriors[c]));
        double mean = 0.0;
        for (std::size_t k = 0; k < laplace_draws; ++k) {
          const auto theta = theta_of(draw(cp.posteriors[c], derive_stream(master, col, c, k)));
          mean += (model(theta) - mean) / static_cast<double>(k + 1);
        }
        reference.push_back(mean);
        names.push_back(cp.categories[c]);
      }
      write_file_atomic(dir / "laplace.csv", format_laplace_csv(names, estimates, reference));
      double worst = 0.0;
      for (std::size_t i = 0; i < estimates.size(); ++i) {
        worst = std::max(worst, std::abs(estimates[i].prediction - reference[i]));
      }
      summary << "large-sample approximation on column " << cp.name << ": " << estimates.size()
              << " categories, max |laplace - monte carlo| = " << format_number(worst) << " (" << laplace_draws
              << " draws)\n\n";
    }

    if (data.task() == Task::binary) {
      std::string text;
      summary << "sampling spread vs multiplicative noise (sigma " << format_number(sigma) << ")\n";
      for (const auto& c : encoder.columns) {
        const auto rows = compare_noise_injection(encoder, c.name, sigma, laplace_draws);
        const std::string csv = format_noise_csv(c.name, rows);
        text += text.empty() ? csv : csv.substr(csv.find('\n') + 1);
        double lo = rows[0].draw_sd, hi = rows[0].draw_sd;
        for (const auto& r : rows) {
          lo = std::min(lo, r.draw_sd);
          hi = std::max(hi, r.draw_sd);
        }
        summary << "  " << c.name << ": draw sd from " << format_number(lo) << " to " << format_number(hi) << '\n';
      }
      write_file_atomic(dir / "noise.csv", text);
    }
    write_file_atomic(dir / "summary.txt", summary.str());
    std::cout << summary.str();
  };
}

Runner cmd_importance(const Settings& s, const Flags& f) {
  const EncoderConfig config = sampling_config(s, "importance");
  return [=] {
    const Dataset data = load_data(s);
    const LearnerSpec spec = s.learner;
    const FittedPipeline sampled = fit_pipeline({config, spec}, data);
    const FittedPipeline baseline = fit_pipeline({s.baseline, spec}, data);
    const auto a = importance_report(sampled.learner, sampled.layout);
    const auto b = importance_report(baseline.learner, baseline.layout);
    std::string text = "feature,sampling,target_mean\n";
    for (std::size_t i = 0; i < a.origin_names.size(); ++i) {
      text += quote_field(a.origin_names[i]) + ',' + format_number(a.per_origin[i]) + ',' +
              format_number(b.per_origin[i]) + '\n';
    }
    write_file_atomic(output_path(s, f.out, "importance.csv"), text);
  };
}

// ---------------------------------------------------------------------------

void add_data_flags(CLI::App* c, Flags& f) {
  c->add_option("--data", f.data, "input CSV (otherwise the generator settings are used)");
  c->add_option("--target", f.target, "target column name");
  c->add_option("--task", f.task, "binary, multiclass or regression");
  c->add_option("--categorical", f.categorical, "comma-separated categorical column names");
  c->add_option("--kind", f.kind, "generator: classification_blobs, hastie_quadratic, linear_regression");
  c->add_option("--rows", f.rows, "generated rows");
  c->add_option("--features", f.features, "generated features");
  c->add_option("--informative", f.informative, "informative features");
  c->add_option("--n-categorical", f.n_categorical, "columns to bin into categories");
  c->add_option("--min-bins", f.min_bins, "fewest categories per binned column");
  c->add_option("--max-bins", f.max_bins, "most categories per binned column");
  c->add_option("--clusters", f.clusters, "clusters per class");
  c->add_option("--class-sep", f.class_sep, "cluster separation");
  c->add_option("--flip-y", f.flip_y, "fraction of labels redrawn at random");
  c->add_option("--noise", f.noise, "regression noise level");
}

void add_encoder_flags(CLI::App* c, Flags& f) {
  c->add_option("--encoder", f.encoder_type, "sampling or target_mean");
  c->add_option("--gamma", f.gamma, "prior scaling factor");
  c->add_option("--k", f.k_draws, "posterior draws per row");
  c->add_option("--mapping", f.mapping, "mean_only, mean_and_precision, polynomial2, weight_of_evidence");
  c->add_option("--unseen-policy", f.unseen_policy, "sample_from_prior or prior_mean");
  c->add_option("--draw-mode", f.draw_mode, "sample or posterior_mean");
  c->add_option("--sigma", f.sigma, "target_mean noise level");
  c->add_option("--loo", f.loo, "target_mean leave-one-out (true/false)");
}

void add_learner_flags(CLI::App* c, Flags& f) {
  c->add_option("--learner", f.learner, "random_forest, ridge or logistic");
  c->add_option("--trees", f.trees, "forest size");
  c->add_option("--max-depth", f.max_depth, "tree depth limit");
  c->add_option("--min-leaf", f.min_leaf, "rows per leaf");
  c->add_option("--mtry", f.mtry, "features tried per split (0: default)");
  c->add_option("--lambda", f.lambda, "L2 penalty");
  c->add_option("--learning-rate", f.learning_rate, "logistic step size");
  c->add_option("--epochs", f.epochs, "logistic epoch cap");
}

void add_validation_flags(CLI::App* c, Flags& f) {
  c->add_option("--folds", f.folds, "cross-validation folds");
  c->add_option("--metric", f.metric, "accuracy or r2");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sampling Bayesian encoding of categorical variables"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON settings document");
  app.add_option("--seed", f.seed, "master seed");
  app.add_option("--threads", f.threads, "worker threads (0: all cores)");
  app.add_option("--output-dir", f.output_dir, "directory for relative output paths (default $SBE_OUTPUT_DIR)");

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_data_flags(gen, f);
  gen->add_option("--out", f.out, "output CSV");

  auto* fit_cmd = app.add_subcommand("fit", "fit the encoder and write the model document");
  add_data_flags(fit_cmd, f);
  add_encoder_flags(fit_cmd, f);
  fit_cmd->add_option("--out", f.out, "output model");

  auto* transform_cmd = app.add_subcommand("transform", "write K encoded copies of a dataset");
  add_data_flags(transform_cmd, f);
  transform_cmd->add_option("--model", f.model, "encoder model document")->required();
  transform_cmd->add_option("--k", f.k_draws, "copies (default: the model's k_draws)");
  transform_cmd->add_option("--out", f.out, "output CSV");

  auto* train_cmd = app.add_subcommand("train", "fit encoder and learner, write a pipeline bundle");
  add_data_flags(train_cmd, f);
  add_encoder_flags(train_cmd, f);
  add_learner_flags(train_cmd, f);
  train_cmd->add_option("--out", f.out, "output bundle");

  auto* eval_cmd = app.add_subcommand("evaluate", "cross-validate, or score a trained bundle");
  add_data_flags(eval_cmd, f);
  add_encoder_flags(eval_cmd, f);
  add_learner_flags(eval_cmd, f);
  add_validation_flags(eval_cmd, f);
  eval_cmd->add_option("--model", f.model, "score this bundle instead of cross-validating");
  eval_cmd->add_option("--out", f.out, "output CSV");

  auto* sweep_cmd = app.add_subcommand("sweep", "cross-validate over one hyperparameter");
  add_data_flags(sweep_cmd, f);
  add_encoder_flags(sweep_cmd, f);
  add_learner_flags(sweep_cmd, f);
  add_validation_flags(sweep_cmd, f);
  sweep_cmd->add_option("--param", f.param, "k_draws, gamma, mapping or noise_sigma");
  sweep_cmd->add_option("--values", f.values, "comma-separated values");
  sweep_cmd->add_option("--out", f.out, "output CSV");

  auto* diag_cmd = app.add_subcommand("diagnose", "loss decomposition, large-sample and noise reports");
  add_data_flags(diag_cmd, f);
  add_encoder_flags(diag_cmd, f);
  add_learner_flags(diag_cmd, f);
  diag_cmd->add_option("--draws", f.draws, "comma-separated draw counts for the decomposition");
  diag_cmd->add_option("--laplace-draws", f.laplace_draws, "Monte Carlo draws for reference values");
  diag_cmd->add_option("--column", f.column, "categorical column for the large-sample report");
  diag_cmd->add_option("--out", f.out, "output directory");

  auto* imp_cmd = app.add_subcommand("importance", "grouped forest importance, sampling vs target mean");
  add_data_flags(imp_cmd, f);
  add_encoder_flags(imp_cmd, f);
  add_learner_flags(imp_cmd, f);
  imp_cmd->add_option("--baseline-sigma", f.baseline_sigma, "baseline noise level");
  imp_cmd->add_option("--baseline-loo", f.baseline_loo, "baseline leave-one-out (true/false)");
  imp_cmd->add_option("--out", f.out, "output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  Runner run;
  try {
    json doc = load_config(f.config);
    apply_flags(doc, f);
    const Settings settings = build_settings(doc);
    if (gen->parsed()) run = cmd_gen_data(settings, f);
    if (fit_cmd->parsed()) run = cmd_fit(settings, f);
    if (transform_cmd->parsed()) run = cmd_transform(settings, f);
    if (train_cmd->parsed()) run = cmd_train(settings, f);
    if (eval_cmd->parsed()) run = cmd_evaluate(settings, f);
    if (sweep_cmd->parsed()) run = cmd_sweep(settings, f, doc);
    if (diag_cmd->parsed()) run = cmd_diagnose(settings, f, doc);
    if (imp_cmd->parsed()) run = cmd_importance(settings, f);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }

  try {
    run();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
