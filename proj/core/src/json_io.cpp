#include <cstdio>
#include <fstream>
#include <set>

#include "splicemix/errors.hpp"
#include "splicemix/io.hpp"

namespace splicemix::io {
namespace {

using nlohmann::json;

const json& require(const json& doc, const char* key, const std::string& where) {
  if (!doc.is_object() || !doc.contains(key)) {
    throw FormatError(where + ": missing key '" + key + "'");
  }
  return doc.at(key);
}

void reject_unknown_keys(const json& doc, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, _] : doc.items()) {
    if (!allowed.contains(key)) throw FormatError(where + ": unknown key '" + key + "'");
  }
}

std::string fnv1a64_hex(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

// Manifest ------------------------------------------------------------------

MultiHotLabel Manifest::label(std::size_t entry) const {
  return MultiHotLabel::from_indices(classes.size(), entries.at(entry).labels);
}

void Manifest::validate() const {
  if (classes.empty()) throw FormatError("manifest: 'classes' must not be empty");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const std::string where = "manifest entry " + std::to_string(i) + " ('" + e.image + "')";
    if (e.image.empty()) throw FormatError(where + ": empty image path");
    if (!seen.insert(e.image).second) throw FormatError(where + ": duplicate image path");
    for (auto k : e.labels) {
      if (k >= classes.size()) {
        throw FormatError(where + ": class index " + std::to_string(k) + " out of range [0, " +
                          std::to_string(classes.size()) + ")");
      }
    }
  }
}

Manifest manifest_from_json(const json& doc) {
  Manifest m;
  try {
    for (const auto& c : require(doc, "classes", "manifest")) m.classes.push_back(c.get<std::string>());
    const auto& entries = require(doc, "entries", "manifest");
    if (!entries.is_array()) throw FormatError("manifest: 'entries' must be an array");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const std::string where = "manifest entry " + std::to_string(i);
      ManifestEntry e;
      e.image = require(entries[i], "image", where).get<std::string>();
      for (const auto& k : require(entries[i], "labels", where)) {
        if (!k.is_number_integer() || k.get<long long>() < 0) {
          throw FormatError(where + " ('" + e.image + "'): labels must be non-negative integers");
        }
        e.labels.push_back(k.get<std::size_t>());
      }
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

json manifest_to_json(const Manifest& manifest) {
  json entries = json::array();
  for (const auto& e : manifest.entries) entries.push_back({{"image", e.image}, {"labels", e.labels}});
  return {{"classes", manifest.classes}, {"entries", entries}};
}

Manifest load_manifest(const fs::path& path) {
  try {
    return manifest_from_json(read_json(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_manifest(const Manifest& manifest, const fs::path& path) {
  write_json(manifest_to_json(manifest), path);
}

// AugConfig -----------------------------------------------------------------

AugConfig aug_config_from_json(const json& doc) {
  if (!doc.is_object()) throw FormatError("aug config must be a JSON object");
  reject_unknown_keys(doc,
                      {"grid_family", "dropout_prob", "mixed_frac", "seed", "asymmetric_flip_prob",
                       "dropout_scope", "cardinality"},
                      "aug config");
  AugConfig cfg;
  try {
    if (doc.contains("grid_family")) {
      cfg.grid_family.clear();
      for (const auto& g : doc.at("grid_family")) {
        cfg.grid_family.push_back(GridGeometry::parse(g.get<std::string>()));
      }
    }
    if (doc.contains("dropout_prob")) cfg.dropout_prob = doc.at("dropout_prob").get<double>();
    if (doc.contains("mixed_frac")) cfg.mixed_frac = doc.at("mixed_frac").get<double>();
    if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("asymmetric_flip_prob")) {
      cfg.asymmetric_flip_prob = doc.at("asymmetric_flip_prob").get<double>();
    }
    if (doc.contains("dropout_scope")) {
      const auto s = doc.at("dropout_scope").get<std::string>();
      if (s == "per_batch") {
        cfg.dropout_scope = DropoutScope::per_batch;
      } else if (s == "per_image") {
        cfg.dropout_scope = DropoutScope::per_image;
      } else {
        throw FormatError("aug config: dropout_scope must be 'per_batch' or 'per_image'");
      }
    }
    if (doc.contains("cardinality")) {
      const auto s = doc.at("cardinality").get<std::string>();
      if (s == "clamp") {
        cfg.cardinality = CardinalityPolicy::clamp;
      } else if (s == "strict") {
        cfg.cardinality = CardinalityPolicy::strict;
      } else {
        throw FormatError("aug config: cardinality must be 'clamp' or 'strict'");
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("aug config: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("aug config: ") + e.what());
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("aug config: ") + e.what());
  }
  return cfg;
}

json aug_config_to_json(const AugConfig& cfg) {
  json grids = json::array();
  for (const auto& g : cfg.grid_family) grids.push_back(g.to_string());
  return {{"grid_family", grids},
          {"dropout_prob", cfg.dropout_prob},
          {"mixed_frac", cfg.mixed_frac},
          {"seed", cfg.seed},
          {"asymmetric_flip_prob", cfg.asymmetric_flip_prob},
          {"dropout_scope", cfg.dropout_scope == DropoutScope::per_batch ? "per_batch" : "per_image"},
          {"cardinality", cfg.cardinality == CardinalityPolicy::clamp ? "clamp" : "strict"}};
}

AugConfig load_aug_config(const fs::path& path) {
  try {
    return aug_config_from_json(read_json(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// BatchPlan -----------------------------------------------------------------

json plan_to_json(const BatchPlan& plan) {
  json mixed = json::array();
  for (const auto& m : plan.mixed) {
    mixed.push_back({{"dropped_cells", m.grid.dropped_cells}, {"members", m.members}});
  }
  return {{"batch_size", plan.batch_size},
          {"grid", plan.geom.to_string()},
          {"dropout_count", plan.dropout_count},
          {"n_mixed", plan.n_mixed()},
          {"mixed", mixed}};
}

BatchPlan plan_from_json(const json& doc) {
  BatchPlan plan;
  try {
    plan.batch_size = require(doc, "batch_size", "plan").get<std::size_t>();
    plan.geom = GridGeometry::parse(require(doc, "grid", "plan").get<std::string>());
    plan.dropout_count = require(doc, "dropout_count", "plan").get<std::size_t>();
    for (const auto& m : require(doc, "mixed", "plan")) {
      MixedPlan mp;
      mp.grid.geom = plan.geom;
      mp.grid.dropped_cells = require(m, "dropped_cells", "plan").get<std::vector<std::size_t>>();
      mp.members = require(m, "members", "plan").get<std::vector<std::size_t>>();
      plan.mixed.push_back(std::move(mp));
    }
    if (doc.contains("n_mixed") && doc.at("n_mixed").get<std::size_t>() != plan.n_mixed()) {
      throw FormatError("plan: n_mixed disagrees with the mixed list");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("plan: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("plan: ") + e.what());
  }
  try {
    plan.validate();
  } catch (const PlanningError& e) {
    throw FormatError(std::string("plan: ") + e.what());
  }
  return plan;
}

std::string plan_digest(const BatchPlan& plan) { return fnv1a64_hex(plan_to_json(plan).dump()); }

// Metrics -------------------------------------------------------------------

namespace {

json prf_to_json(const metrics::PrfScores& s) {
  return {{"CP", s.cp}, {"CR", s.cr}, {"CF1", s.cf1}, {"OP", s.op}, {"OR", s.or_}, {"OF1", s.of1}};
}

}  // namespace

json metrics_to_json(const metrics::MetricsReport& report) {
  json per_class = json::array();
  for (const auto& ap : report.per_class_ap) {
    per_class.push_back(ap ? json(100.0 * *ap) : json(nullptr));
  }
  return {{"mAP", report.map},
          {"all", prf_to_json(report.all)},
          {"top3", prf_to_json(report.top3)},
          {"per_class_ap", per_class},
          {"skipped_classes", report.skipped_classes},
          {"warnings", report.warnings}};
}

// Files ---------------------------------------------------------------------

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const json& doc, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

// Archive -------------------------------------------------------------------

void write_batch_archive(const SplicedBatch& batch, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<ImageTensor> images;
  std::vector<MultiHotLabel> labels;
  images.reserve(batch.size());
  labels.reserve(batch.size());
  for (const auto* part : {&batch.regulars, &batch.mixed}) {
    for (const auto& s : *part) {
      images.push_back(s.image);
      labels.push_back(s.label);
    }
  }
  write_npy(stack_images(images), dir / "images.npy");
  write_npy(stack_labels(labels), dir / "labels.npy");
  write_json(plan_to_json(batch.plan), dir / "plan.json");
}

BatchArchive read_batch_archive(const fs::path& dir) {
  for (const char* name : {"images.npy", "labels.npy", "plan.json"}) {
    if (!fs::exists(dir / name)) throw Error("archive " + dir.string() + " is missing " + name);
  }
  BatchArchive a;
  a.images = read_npy(dir / "images.npy");
  a.labels = read_npy(dir / "labels.npy");
  a.plan = plan_from_json(read_json(dir / "plan.json"));
  if (a.images.dtype != DType::float32 || a.images.shape.size() != 4) {
    throw FormatError(dir.string() + ": images.npy must be float32 [N, C, H, W]");
  }
  if (a.labels.dtype != DType::uint8 || a.labels.shape.size() != 2) {
    throw FormatError(dir.string() + ": labels.npy must be uint8 [N, K]");
  }
  const std::size_t n = a.images.shape[0];
  if (a.labels.shape[0] != n || n != a.plan.batch_size + a.plan.n_mixed()) {
    throw FormatError(dir.string() + ": images, labels and plan disagree on the sample count");
  }
  return a;
}

}  // namespace splicemix::io
