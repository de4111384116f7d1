#include "attrib/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "attrib/bench.hpp"
#include "attrib/dataset.hpp"
#include "attrib/gradcam.hpp"
#include "attrib/integrated_gradients.hpp"
#include "attrib/lime.hpp"
#include "attrib/verify.hpp"
#include "attrib/viz.hpp"

namespace attrib::cli {

EnvLookup process_environment() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

namespace {

namespace fs = std::filesystem;

struct Settings {
  std::string model = "minivgg";
  std::string models = "minivgg,miniresnet";
  std::string weights;
  std::string method = "gradcam";
  std::string methods = "gradcam,ig,lime";
  std::size_t steps = 50;
  std::string baseline = "zeros";
  std::string rule = "midpoint";
  std::string distance = "cosine";
  std::size_t num_samples = 1000;
  std::size_t top_labels = 3;
  std::size_t grid_k = 8;
  std::string segmentation = "grid";
  double sigma = 0.25;
  double lambda = 1.0;
  double alpha = 0.4;
  std::string layer;
  std::string target;
  std::uint64_t seed = 0;
  std::string out = "attrib_out";
  std::size_t input_size = 64;
  std::string image;
  std::string precision = "f32";
  std::string config;
  std::string data;
  std::size_t epochs = 5;
  double lr = 0.03;
  std::size_t batch_size = 2;
  double split = 0.8;
  std::size_t n_per_class = 200;
  std::size_t classes = 3;
  std::size_t images = 20;
  std::size_t warmup = 1;
  std::string suites = "gradients,completeness,surrogate";

  std::set<std::string> given;  // options set by flag, environment or config
  bool has(const std::string& name) const { return given.count(name) > 0; }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& i : items) out += (out.empty() ? "" : ", ") + i;
  return out;
}

std::string env_name(const std::string& option) {
  std::string out = "ATTRIB_";
  for (char c : option) out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string option_name(const CLI::Option* opt) {
  return opt->get_lnames().empty() ? std::string() : opt->get_lnames().front();
}

// key -> value, top level under "", sections by name.
using ConfigMap = std::map<std::string, std::map<std::string, std::string>>;

ConfigMap read_config(const std::string& path, const std::set<std::string>& sections,
                      const std::set<std::string>& keys) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config file '" + path + "'");
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    throw Error("config file '" + path + "': " + e.what());
  }
  ConfigMap out;
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    std::string key = item.name;
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string section = item.parents.empty() ? "" : item.parents.front();
    if (!section.empty() && !sections.count(section)) {
      throw Error("config file '" + path + "': unknown section '" + section + "'");
    }
    if (!keys.count(key)) throw Error("config file '" + path + "': unknown key '" + item.name + "'");
    std::string value;
    for (const auto& v : item.inputs) value += (value.empty() ? "" : ",") + v;
    out[section][key] = value;
  }
  return out;
}

// Fills every option the command line left unset from the environment, then
// from the config file. Flags therefore beat both.
void resolve_sources(CLI::App& sub, Settings& s, const EnvLookup& env,
                     const std::set<std::string>& all_keys, const std::set<std::string>& sections) {
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->count() > 0) s.given.insert(option_name(opt));
  }
  if (!s.has("config")) {
    if (auto v = env("ATTRIB_CONFIG")) s.config = *v;
  }
  ConfigMap config;
  if (!s.config.empty()) config = read_config(s.config, sections, all_keys);

  for (CLI::Option* opt : sub.get_options()) {
    const auto name = option_name(opt);
    if (name.empty() || name == "help" || name == "config" || opt->count() > 0) continue;
    std::optional<std::string> value;
    std::string source;
    if (auto v = env(env_name(name))) {
      value = v;
      source = env_name(name);
    } else {
      for (const std::string& section : {sub.get_name(), std::string()}) {
        const auto sec = config.find(section);
        if (sec == config.end()) continue;
        const auto it = sec->second.find(name);
        if (it == sec->second.end()) continue;
        value = it->second;
        source = "config file";
        break;
      }
    }
    if (!value) continue;
    try {
      opt->add_result(*value);
      opt->run_callback();
    } catch (const CLI::Error&) {
      throw Error("invalid value '" + *value + "' for --" + name + " from " + source);
    }
    s.given.insert(name);
  }
}

template <typename T>
nn::ModelGraph<T> model_for(const Settings& s, std::ostream& err) {
  if (!s.weights.empty()) {
    auto m = nn::load_model<T>(s.weights);
    if (s.has("input-size") && m.metadata().input_shape[1] != s.input_size) {
      m = m.with_input_shape({3, s.input_size, s.input_size});
    }
    return m;
  }
  const auto archs = nn::architecture_names();
  if (std::find(archs.begin(), archs.end(), s.model) == archs.end()) {
    throw Error("unknown model '" + s.model + "'; valid: " + join(archs));
  }
  err << "note: no --weights given; using an untrained " << s.model << " (seed " << s.seed << ")\n";
  return nn::make_model<T>(s.model, s.input_size, s.classes, s.seed);
}

std::optional<std::size_t> target_class(const Settings& s, const nn::ModelMetadata& meta) {
  if (s.target.empty()) return std::nullopt;
  const auto& names = meta.class_names;
  const auto it = std::find(names.begin(), names.end(), s.target);
  if (it != names.end()) return static_cast<std::size_t>(it - names.begin());
  try {
    std::size_t pos = 0;
    const auto v = std::stoul(s.target, &pos);
    if (pos == s.target.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error("unknown target class '" + s.target + "'; valid: " + join(names));
}

std::size_t worker_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

lime::LimeParams lime_params(const Settings& s) {
  lime::LimeParams p;
  p.num_samples = s.num_samples;
  p.top_labels = s.top_labels;
  p.seed = s.seed;
  p.sigma = s.sigma;
  p.lambda = s.lambda;
  p.segmentation.method = lime::segmentation_from_string(s.segmentation);
  p.segmentation.grid_k = s.grid_k;
  if (s.distance == "cosine") {
    p.distance = lime::KernelDistance::kCosine;
  } else if (s.distance == "pixel") {
    p.distance = lime::KernelDistance::kPixel;
  } else {
    throw Error("unknown kernel distance '" + s.distance + "'; valid: cosine, pixel");
  }
  return p;
}

std::string safe_name(std::string name) {
  for (auto& c : name) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return name;
}

template <typename T>
std::vector<double> to_doubles(std::span<const T> v) {
  return std::vector<double>(v.begin(), v.end());
}

template <typename T>
int explain_command(const Settings& s, std::ostream& out, std::ostream& err) {
  const auto methods = bench::method_names();
  if (std::find(methods.begin(), methods.end(), s.method) == methods.end()) {
    throw Error("unknown method '" + s.method + "'; valid: " + join(methods));
  }
  if (s.image.empty()) throw Error("explain needs --image");
  const auto model = model_for<T>(s, err);
  const std::size_t size = model.metadata().input_shape[1];
  const auto image = data::load_image<T>(s.image, size);
  const auto trace = nn::forward(model, image);
  const auto target = target_class(s, model.metadata());

  const fs::path dir(s.out);
  fs::create_directories(dir);
  std::vector<fs::path> written;
  auto write = [&](const viz::RgbImage& img, const std::string& name) {
    viz::write_image(img, dir / name);
    written.push_back(dir / name);
  };
  const auto base = viz::to_rgb(image);
  write(base, "input.png");

  nlohmann::json j;
  j["method"] = s.method;
  j["model"] = model.metadata().arch;
  j["weights"] = s.weights;
  j["image"] = s.image;
  j["seed"] = s.seed;
  j["class_names"] = model.metadata().class_names;
  j["probabilities"] = to_doubles<T>(trace.probabilities);
  j["predicted"] = trace.predicted;

  if (s.method == "gradcam") {
    GradCamOptions o;
    o.target_class = target;
    if (!s.layer.empty()) o.layer = s.layer;
    const auto cam = grad_cam(model, image, o);
    const auto heat = viz::colormap(cam.heatmap);
    write(heat, "gradcam_heatmap.png");
    write(viz::overlay(base, heat, s.alpha), "gradcam_overlay.png");
    j["target_class"] = cam.target_class;
    j["layer"] = cam.layer_name;
    j["channel_weights"] = to_doubles<T>(cam.channel_weights);
  } else if (s.method == "ig") {
    IgParams<T> p;
    p.steps = s.steps;
    p.baseline_kind = baseline_from_string(s.baseline);
    p.rule = riemann_rule_from_string(s.rule);
    p.target_class = target;
    p.threads = worker_threads();
    const auto r = integrated_gradients(model, image, p);
    const auto mask = viz::colormap(viz::attribution_magnitude(r.attributions));
    write(mask, "ig_mask.png");
    write(viz::overlay(base, mask, s.alpha), "ig_overlay.png");
    write(viz::render_signed_attribution(r.attributions), "ig_signed.png");
    j["target_class"] = r.target_class;
    j["steps"] = r.steps;
    j["baseline"] = s.baseline;
    j["rule"] = s.rule;
    j["logit_input"] = r.logit_input;
    j["logit_baseline"] = r.logit_baseline;
    j["completeness_gap"] = r.completeness_gap;
    j["relative_gap"] = r.relative_gap();
  } else {
    auto p = lime_params(s);
    p.threads = worker_threads();
    if (target) throw Error("--target is not used by lime; it explains the top labels");
    const auto exps = lime::explain(model, image, p);
    j["num_samples"] = s.num_samples;
    j["distance"] = s.distance;
    j["sigma"] = s.sigma;
    j["segments"] = exps.front().segments->count;
    auto& labels = j["labels"];
    for (std::size_t rank = 0; rank < exps.size(); ++rank) {
      const auto& e = exps[rank];
      const auto stem = "lime_" + std::to_string(rank + 1) + "_" +
                        safe_name(model.metadata().class_names[e.target_class]);
      write(viz::render_lime(base, e, viz::LimeRenderMode::kIsolate), stem + "_isolate.png");
      write(viz::render_lime(base, e, viz::LimeRenderMode::kSigned), stem + "_signed.png");
      labels.push_back({{"class", e.target_class},
                        {"probability", e.probability},
                        {"coefficients", e.coefficients},
                        {"intercept", e.intercept},
                        {"weighted_r2", e.weighted_r2}});
    }
  }
  std::ofstream json_out(dir / "explanation.json", std::ios::trunc);
  if (!json_out) throw Error("cannot write '" + (dir / "explanation.json").string() + "'");
  json_out << j.dump(2) << '\n';
  written.push_back(dir / "explanation.json");
  for (const auto& p : written) out << "wrote " << p.string() << '\n';
  return 0;
}

template <typename T>
void training_data(const Settings& s, nn::Dataset<T>& train, nn::Dataset<T>& test,
                   std::vector<std::string>& class_names) {
  if (!s.data.empty()) {
    auto loaded = data::load_dataset<T>(s.data, s.input_size, s.split, s.seed);
    train = std::move(loaded.train);
    test = std::move(loaded.test);
    class_names = loaded.manifest.class_names;
    return;
  }
  const auto synth = data::synth_dataset<T>({s.n_per_class, s.classes, s.input_size, s.seed});
  data::split_dataset(synth.data, s.split, s.seed, train, test);
  class_names = synth.class_names;
}

template <typename T>
int train_command(const Settings& s, std::ostream& out) {
  const auto archs = nn::architecture_names();
  if (std::find(archs.begin(), archs.end(), s.model) == archs.end()) {
    throw Error("unknown model '" + s.model + "'; valid: " + join(archs));
  }
  nn::Dataset<T> train, test;
  std::vector<std::string> names;
  training_data(s, train, test, names);
  const auto init = nn::make_model<T>(s.model, s.input_size, names.size(), s.seed);
  auto meta = init.metadata();
  meta.class_names = names;
  const nn::ModelGraph<T> model(init.layers(), init.params(), meta);

  const auto result = nn::train(model, train, {s.epochs, s.lr, s.batch_size, s.seed});
  for (std::size_t e = 0; e < result.epochs.size(); ++e) {
    out << "epoch " << e + 1 << " loss " << result.epochs[e].loss << " train_accuracy "
        << result.epochs[e].accuracy << '\n';
  }
  if (test.size() > 0) out << "test_accuracy " << nn::accuracy(result.model, test) << '\n';
  const fs::path path = s.weights.empty() ? fs::path(s.out) / (s.model + ".model") : fs::path(s.weights);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  nn::save_model(result.model, path);
  out << "wrote " << path.string() << '\n';
  return 0;
}

int synth_command(const Settings& s, std::ostream& out) {
  const auto ds = data::synth_dataset<float>({s.n_per_class, s.classes, s.input_size, s.seed});
  data::write_dataset(ds, s.out);
  out << "wrote " << ds.data.size() << " images in " << ds.class_names.size() << " classes to " << s.out
      << '\n';
  return 0;
}

template <typename T>
std::vector<Tensor<T>> bench_images(const Settings& s) {
  if (s.images == 0) throw Error("bench needs --images >= 1");
  std::vector<Tensor<T>> images;
  if (!s.data.empty()) {
    const auto manifest = data::scan_dataset(s.data, s.input_size, s.split, s.seed);
    for (const auto& f : manifest.test_files) {
      if (images.size() == s.images) break;
      images.push_back(data::load_image<T>(f, s.input_size));
    }
    return images;
  }
  const std::size_t per_class = (s.images + s.classes - 1) / s.classes;
  auto synth = data::synth_dataset<T>({per_class, s.classes, s.input_size, s.seed});
  synth.data.images.resize(s.images);
  return std::move(synth.data.images);
}

template <typename T>
int bench_command(const Settings& s, std::ostream& out, std::ostream& err) {
  const auto names = split_list(s.models);
  const auto weights = split_list(s.weights);
  if (!weights.empty() && weights.size() != names.size()) {
    throw Error("--weights lists " + std::to_string(weights.size()) + " files for " +
                std::to_string(names.size()) + " models");
  }
  std::vector<bench::BenchModel<T>> models;
  const auto archs = nn::architecture_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (std::find(archs.begin(), archs.end(), names[i]) == archs.end()) {
      throw Error("unknown model '" + names[i] + "'; valid: " + join(archs));
    }
    auto graph = weights.empty() ? nn::make_model<T>(names[i], s.input_size, s.classes, s.seed)
                                 : nn::load_model<T>(weights[i]);
    models.push_back({names[i], std::move(graph)});
  }
  if (weights.empty()) err << "note: timing untrained models (seed " << s.seed << ")\n";
  const auto images = bench_images<T>(s);

  bench::BenchOptions o;
  o.warmup = s.warmup;
  o.ig_steps = s.steps;
  o.ig_baseline = baseline_from_string(s.baseline);
  o.ig_rule = riemann_rule_from_string(s.rule);
  o.lime = lime_params(s);
  const auto report = bench::run_bench(models, split_list(s.methods), images, o);

  const fs::path dir(s.out);
  fs::create_directories(dir);
  bench::write_records_csv(report, dir / "bench.csv");
  bench::write_summary_csv(report, dir / "bench_summary.csv");
  out << "mean seconds per image (" << images.size() << " images, " << report.note << ")\n";
  out << std::left << std::setw(12) << "model";
  for (const auto& m : report.methods) out << std::setw(14) << m;
  out << '\n';
  for (const auto& model : report.models) {
    out << std::setw(12) << model;
    for (const auto& m : report.methods) out << std::setw(14) << report.mean(model, m);
    out << '\n';
  }
  out << "wrote " << (dir / "bench.csv").string() << '\n'
      << "wrote " << (dir / "bench_summary.csv").string() << '\n';
  return 0;
}

int verify_command(const Settings& s, std::ostream& out) {
  const auto valid = verify::suite_names();
  const auto suites = split_list(s.suites);
  if (suites.empty()) throw Error("verify: no suites requested");
  for (const auto& name : suites) {
    if (std::find(valid.begin(), valid.end(), name) == valid.end()) {
      throw Error("unknown suite '" + name + "'; valid: " + join(valid));
    }
  }
  bool ok = true;
  for (const auto& name : suites) {
    verify::SuiteResult r;
    if (name == "gradients") {
      r = verify::gradient_check(10, s.seed);
    } else if (name == "surrogate") {
      r = verify::surrogate_fidelity(s.seed);
    } else {
      nn::Dataset<float> train, test;
      std::vector<std::string> names;
      Settings local = s;
      training_data(local, train, test, names);
      nn::ModelGraph<double> model = [&] {
        if (!s.weights.empty()) return nn::load_model<double>(s.weights);
        out << "training " << s.model << " for the completeness suite\n";
        const auto init = nn::make_model<float>(s.model, s.input_size, names.size(), s.seed);
        return nn::train(init, train, {s.epochs, s.lr, s.batch_size, s.seed}).model.cast<double>();
      }();
      std::vector<Tensor<double>> images;
      for (std::size_t i = 0; i < test.size() && images.size() < s.images; ++i) {
        images.push_back(test.images[i].cast<double>());
      }
      r = verify::completeness(model, images, s.steps, 0.01, 0.1, riemann_rule_from_string(s.rule));
    }
    out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

void add_common(CLI::App* sub, Settings& s) {
  sub->add_option("--seed", s.seed, "random seed")->capture_default_str();
  sub->add_option("--out", s.out, "output directory")->capture_default_str();
  sub->add_option("--config", s.config, "key = value config file");
}

void add_model(CLI::App* sub, Settings& s) {
  sub->add_option("--model", s.model, "minivgg or miniresnet")->capture_default_str();
  sub->add_option("--input-size", s.input_size, "square input side")->capture_default_str();
  sub->add_option("--classes", s.classes, "class count for untrained or synthetic models")
      ->capture_default_str();
  sub->add_option("--precision", s.precision, "f32 or f64")->capture_default_str();
}

void add_train(CLI::App* sub, Settings& s) {
  sub->add_option("--data", s.data, "dataset root (default: synthetic)");
  sub->add_option("--epochs", s.epochs)->capture_default_str();
  sub->add_option("--lr", s.lr)->capture_default_str();
  sub->add_option("--batch-size", s.batch_size)->capture_default_str();
  sub->add_option("--split", s.split, "train fraction")->capture_default_str();
  sub->add_option("--n-per-class", s.n_per_class, "synthetic images per class")->capture_default_str();
}

void add_explain_params(CLI::App* sub, Settings& s) {
  sub->add_option("--steps", s.steps, "IG steps")->capture_default_str();
  sub->add_option("--baseline", s.baseline, "zeros, gray or mean")->capture_default_str();
  sub->add_option("--rule", s.rule, "IG step points: midpoint or right")->capture_default_str();
  sub->add_option("--num-samples", s.num_samples, "LIME perturbations")->capture_default_str();
  sub->add_option("--top-labels", s.top_labels, "LIME labels explained")->capture_default_str();
  sub->add_option("--grid-k", s.grid_k, "LIME grid cells per axis")->capture_default_str();
  sub->add_option("--segmentation", s.segmentation, "grid or slic")->capture_default_str();
  sub->add_option("--sigma", s.sigma, "LIME kernel width")->capture_default_str();
  sub->add_option("--distance", s.distance, "LIME kernel distance: cosine or pixel")->capture_default_str();
  sub->add_option("--lambda", s.lambda, "LIME ridge strength")->capture_default_str();
}

template <typename F>
int with_precision(const Settings& s, F&& f) {
  if (s.precision == "f32") return f(float{});
  if (s.precision == "f64") return f(double{});
  throw Error("unknown precision '" + s.precision + "'; valid: f32, f64");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const EnvLookup& env) {
  Settings s;
  CLI::App app("Grad-CAM, Integrated Gradients and LIME on mini CNNs", "attrib");
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate the synthetic dataset");
  add_common(synth, s);
  synth->add_option("--n-per-class", s.n_per_class, "images per class")->capture_default_str();
  synth->add_option("--classes", s.classes, "class count")->capture_default_str();
  synth->add_option("--input-size", s.input_size, "image side")->capture_default_str();

  auto* train = app.add_subcommand("train", "fit a mini model and save its weights");
  add_common(train, s);
  add_model(train, s);
  add_train(train, s);
  train->add_option("--weights", s.weights, "output path (default OUT/MODEL.model)");

  auto* explain = app.add_subcommand("explain", "explain one image with one method");
  add_common(explain, s);
  add_model(explain, s);
  add_explain_params(explain, s);
  explain->add_option("--weights", s.weights, "model file");
  explain->add_option("--image", s.image, "input .ppm or .png");
  explain->add_option("--method", s.method, "gradcam, ig or lime")->capture_default_str();
  explain->add_option("--alpha", s.alpha, "overlay strength")->capture_default_str();
  explain->add_option("--layer", s.layer, "Grad-CAM layer name or index");
  explain->add_option("--target", s.target, "class name or index (default: predicted)");

  auto* bench_cmd = app.add_subcommand("bench", "time the methods per image");
  add_common(bench_cmd, s);
  add_explain_params(bench_cmd, s);
  bench_cmd->add_option("--model", s.models, "comma-separated models")->capture_default_str();
  bench_cmd->add_option("--method", s.methods, "comma-separated methods")->capture_default_str();
  bench_cmd->add_option("--weights", s.weights, "comma-separated model files, one per model");
  bench_cmd->add_option("--data", s.data, "dataset root (default: synthetic)");
  bench_cmd->add_option("--split", s.split, "train fraction; test images are timed")->capture_default_str();
  bench_cmd->add_option("--images", s.images)->capture_default_str();
  bench_cmd->add_option("--warmup", s.warmup)->capture_default_str();
  bench_cmd->add_option("--input-size", s.input_size)->capture_default_str();
  bench_cmd->add_option("--classes", s.classes, "class count for synthetic images")->capture_default_str();
  bench_cmd->add_option("--precision", s.precision, "f32 or f64")->capture_default_str();

  auto* verify_cmd = app.add_subcommand("verify", "run the gradient, completeness and surrogate suites");
  add_common(verify_cmd, s);
  add_model(verify_cmd, s);
  add_train(verify_cmd, s);
  verify_cmd->add_option("--weights", s.weights, "model for the completeness suite");
  verify_cmd->add_option("--suites", s.suites)->capture_default_str();
  verify_cmd->add_option("--steps", s.steps, "IG steps")->capture_default_str();
  verify_cmd->add_option("--rule", s.rule, "IG step points: midpoint or right")->capture_default_str();
  verify_cmd->add_option("--images", s.images, "held-out images checked")->capture_default_str();

  std::set<std::string> keys, sections;
  for (const auto* sub : app.get_subcommands({})) {
    sections.insert(sub->get_name());
    for (const auto* opt : sub->get_options()) {
      const auto name = option_name(opt);
      if (!name.empty() && name != "help" && name != "config") keys.insert(name);
    }
  }

  CLI::App* chosen = nullptr;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    chosen = app.get_subcommands().front();
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return 0;
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    err << "error: " << e.what() << '\n' << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  try {
    resolve_sources(*chosen, s, env, keys, sections);
    const auto& name = chosen->get_name();
    if (name == "synth") return synth_command(s, out);
    if (name == "verify") return verify_command(s, out);
    return with_precision(s, [&](auto tag) {
      using T = decltype(tag);
      if (name == "train") return train_command<T>(s, out);
      if (name == "explain") return explain_command<T>(s, out, err);
      return bench_command<T>(s, out, err);
    });
  } catch (const std::exception& e) {
    std::string what = e.what();
    std::replace(what.begin(), what.end(), '\n', ' ');
    err << "error: " << what << '\n';
    return 1;
  }
}

}  // namespace attrib::cli
