#include "sgsplat/pipeline.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "sgsplat/scene_gen.hpp"

namespace sgsplat {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw InvalidInput("config: bad number for " + key + ": " + v);
  }
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::int64_t i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw InvalidInput("config: bad integer for " + key + ": " + v);
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const std::uint64_t i = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw InvalidInput("config: bad integer for " + key + ": " + v);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InvalidInput("config: bad boolean for " + key + ": " + v);
}

template <class F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const InvalidInput& e) {
    throw InvalidInput(std::string(name) + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(std::string(name) + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(std::string(name) + ": " + e.what());
  }
}

}  // namespace

void PipelineConfig::validate() const {
  fit.validate();
  if (feature_channels <= 0) {
    throw InvalidInput("feature_channels must be positive");
  }
  if (noise < 0.0) throw InvalidInput("noise must be non-negative");
}

PipelineConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidInput("config: line " + std::to_string(lineno) +
                         " is not key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw InvalidInput("config: empty key on line " + std::to_string(lineno));
    }
    if (!kv.emplace(key, value).second) {
      throw InvalidInput("config: duplicate key " + key);
    }
  }

  PipelineConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "iterations") {
      c.fit.iterations = static_cast<int>(parse_int(key, value));
    } else if (key == "step") {
      c.fit.step = parse_double(key, value);
    } else if (key == "optimizer") {
      if (value == "adam") {
        c.fit.optimizer = Optimizer::kAdam;
      } else if (value == "gd") {
        c.fit.optimizer = Optimizer::kGradientDescent;
      } else {
        throw InvalidInput("config: optimizer must be adam or gd");
      }
    } else if (key == "beta1") {
      c.fit.beta1 = parse_double(key, value);
    } else if (key == "beta2") {
      c.fit.beta2 = parse_double(key, value);
    } else if (key == "epsilon") {
      c.fit.epsilon = parse_double(key, value);
    } else if (key == "weight_decay") {
      c.fit.weight_decay = parse_double(key, value);
    } else if (key == "lambda") {
      c.fit.lambda = parse_double(key, value);
    } else if (key == "cutoff") {
      c.fit.cutoff = parse_double(key, value);
    } else if (key == "tolerance") {
      c.fit.tolerance = parse_double(key, value);
    } else if (key == "k") {
      c.fit.k = static_cast<int>(parse_int(key, value));
    } else if (key == "sh_degree") {
      c.fit.sh_degree = static_cast<int>(parse_int(key, value));
    } else if (key == "similarity") {
      if (value == "dot") {
        c.fit.similarity = SimilarityMode::kDot;
      } else if (value == "cosine") {
        c.fit.similarity = SimilarityMode::kCosine;
      } else {
        throw InvalidInput("config: similarity must be dot or cosine");
      }
    } else if (key == "seed") {
      c.fit.seed = parse_u64(key, value);
    } else if (key == "threads") {
      c.fit.threads = static_cast<int>(parse_int(key, value));
    } else if (key == "feature_channels") {
      c.feature_channels = static_cast<int>(parse_int(key, value));
    } else if (key == "noise") {
      c.noise = parse_double(key, value);
    } else if (key == "upsample") {
      c.upsample = parse_bool(key, value);
    } else {
      throw InvalidInput("config: unknown key " + key);
    }
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const PipelineConfig& config) {
  std::ostringstream out;
  out << "iterations = " << config.fit.iterations << "\n";
  out << "step = " << fmt_double(config.fit.step) << "\n";
  out << "optimizer = "
      << (config.fit.optimizer == Optimizer::kAdam ? "adam" : "gd") << "\n";
  out << "beta1 = " << fmt_double(config.fit.beta1) << "\n";
  out << "beta2 = " << fmt_double(config.fit.beta2) << "\n";
  out << "epsilon = " << fmt_double(config.fit.epsilon) << "\n";
  out << "weight_decay = " << fmt_double(config.fit.weight_decay) << "\n";
  out << "lambda = " << fmt_double(config.fit.lambda) << "\n";
  out << "cutoff = " << fmt_double(config.fit.cutoff) << "\n";
  out << "tolerance = " << fmt_double(config.fit.tolerance) << "\n";
  out << "k = " << config.fit.k << "\n";
  out << "sh_degree = " << config.fit.sh_degree << "\n";
  out << "similarity = "
      << (config.fit.similarity == SimilarityMode::kCosine ? "cosine" : "dot")
      << "\n";
  out << "seed = " << config.fit.seed << "\n";
  out << "threads = " << config.fit.threads << "\n";
  out << "feature_channels = " << config.feature_channels << "\n";
  out << "noise = " << fmt_double(config.noise) << "\n";
  out << "upsample = " << (config.upsample ? "true" : "false") << "\n";
  return out.str();
}

PipelineResult run_pipeline(const LabelGrid& gt, int num_semantic,
                            const PipelineConfig& config) {
  config.validate();
  if (num_semantic < 1) throw InvalidInput("need at least one semantic class");
  const int num_classes = num_semantic + 1;
  if (config.feature_channels < num_classes) {
    throw InvalidInput("feature_channels must cover every class");
  }

  const FeatureVolume features = stage("gen_features", [&] {
    return gen_features(gt, config.feature_channels, config.noise,
                        config.fit.seed);
  });
  SceneModel model = stage(
      "build_model", [&] { return build_model(features, num_classes, config.fit); });

  PipelineResult r;
  r.fit = stage("fit", [&] { return fit(std::move(model), gt, config.fit); });

  const ForwardResult final_fwd = forward(r.fit.model, gt);
  r.prediction = argmax_labels(final_fwd.fused_logits);
  r.fused_metrics = stage(
      "compute_metrics", [&] { return evaluate(r.prediction, gt, num_classes); });
  r.gauss_metrics =
      evaluate(argmax_labels(final_fwd.gauss_logits), gt, num_classes);
  return r;
}

namespace {

void append_metrics(std::ostringstream& out, const std::string& prefix,
                    const MetricsReport& m) {
  out << prefix << ".mean_iou = " << fmt_double(m.mean_iou) << "\n";
  out << prefix << ".occupancy_iou = " << fmt_double(m.occupancy_iou) << "\n";
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    const ClassCounts& cc = m.per_class[c];
    out << prefix << ".class" << c << ".iou = " << fmt_double(cc.iou()) << "\n";
    out << prefix << ".class" << c << ".tp = " << cc.tp << "\n";
    out << prefix << ".class" << c << ".fp = " << cc.fp << "\n";
    out << prefix << ".class" << c << ".fn = " << cc.fn << "\n";
  }
}

}  // namespace

std::string serialize_metrics(const NamedMetrics& reports) {
  std::ostringstream out;
  for (const auto& [name, report] : reports) {
    append_metrics(out, name, report);
  }
  return out.str();
}

std::string serialize_metrics_json(const NamedMetrics& reports) {
  const auto to_json = [](const MetricsReport& m) {
    nlohmann::json j;
    j["mean_iou"] = m.mean_iou;
    j["occupancy_iou"] = m.occupancy_iou;
    j["classes"] = nlohmann::json::array();
    for (const ClassCounts& cc : m.per_class) {
      j["classes"].push_back({{"iou", cc.iou()},
                              {"tp", cc.tp},
                              {"fp", cc.fp},
                              {"fn", cc.fn}});
    }
    return j;
  };
  nlohmann::json j;
  for (const auto& [name, report] : reports) {
    j[name] = to_json(report);
  }
  return j.dump(2) + "\n";
}

std::string serialize_trajectory(const std::vector<FitRecord>& trajectory) {
  std::ostringstream out;
  out << "# iter ce lovasz scal align orth total fused_mean_iou "
         "gauss_occupancy_iou\n";
  for (const FitRecord& r : trajectory) {
    out << r.iteration << ' ' << fmt_double(r.losses.ce) << ' '
        << fmt_double(r.losses.lovasz) << ' ' << fmt_double(r.losses.scal)
        << ' ' << fmt_double(r.losses.align) << ' '
        << fmt_double(r.losses.orth) << ' ' << fmt_double(r.losses.total())
        << ' ' << fmt_double(r.fused_mean_iou) << ' '
        << fmt_double(r.gauss_occupancy_iou) << "\n";
  }
  return out.str();
}

LabelGrid upsample_labels(const LabelGrid& labels, int factor) {
  labels.spec.validate();
  if (factor < 1) throw InvalidInput("upsample factor must be >= 1");
  GridSpec spec = labels.spec;
  spec.nx *= factor;
  spec.ny *= factor;
  spec.nz *= factor;
  spec.resolution = labels.spec.resolution / factor;
  LabelGrid out = LabelGrid::zeros(spec, 1);
  for (int i = 0; i < spec.nx; ++i) {
    for (int j = 0; j < spec.ny; ++j) {
      for (int kk = 0; kk < spec.nz; ++kk) {
        out.at(i, j, kk, 0) =
            labels.at(i / factor, j / factor, kk / factor, 0);
      }
    }
  }
  return out;
}

}  // namespace sgsplat
