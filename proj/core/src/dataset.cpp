#include "parasite/dataset.hpp"

#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "parasite/rng.hpp"

namespace parasite {

using nlohmann::json;

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::synthetic: return "synthetic";
    case Provenance::imported: return "imported";
    case Provenance::poisoned: return "poisoned";
  }
  return "?";
}

std::string numbered_id(std::string_view prefix, std::size_t index) {
  std::ostringstream os;
  os << prefix << '/' << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

void Dataset::add(std::string id, ImageTensor image, Provenance provenance) {
  if (image.empty() || !image.shape().square()) {
    throw ShapeError("dataset item '" + id + "' must be a non-empty square image, got " + image.shape().str());
  }
  if (!all_finite(image.values())) throw InputError("dataset item '" + id + "' has non-finite pixels");
  if (items_.empty()) {
    shape_ = image.shape();
  } else if (!(image.shape() == shape_)) {
    throw ShapeError("dataset item '" + id + "' has shape " + image.shape().str() + ", dataset holds " + shape_.str());
  }
  if (index_.contains(id)) throw InputError("duplicate dataset id '" + id + "'");
  index_.emplace(id, items_.size());
  items_.push_back(Sample{std::move(id), provenance, std::move(image)});
}

const Sample* Dataset::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &items_[it->second];
}

std::size_t Dataset::count(Provenance p) const {
  return static_cast<std::size_t>(
      std::count_if(items_.begin(), items_.end(), [p](const Sample& s) { return s.provenance == p; }));
}

Dataset select(const Dataset& ds, Provenance p) {
  Dataset out;
  for (const Sample& s : ds) {
    if (s.provenance == p) out.add(s);
  }
  return out;
}

Dataset gen_synthetic(std::size_t count, int size, std::uint64_t seed, int channels, std::string_view id_prefix) {
  if (count < 1) throw ConfigError("synthetic corpus needs count >= 1");
  if (size != 8 && size != 16 && size != 32 && size != 64) {
    throw ConfigError("synthetic image size must be one of 8, 16, 32, 64");
  }
  if (channels != 1 && channels != 3) throw ConfigError("channels must be 1 or 3");

  Dataset ds;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, i));
    std::uniform_int_distribution<int> bump_count(2, 4);
    std::uniform_real_distribution<double> centre(0.0, size - 1.0);
    std::uniform_real_distribution<double> width(0.08 * size, 0.3 * size);
    std::uniform_real_distribution<double> amplitude(0.5, 1.0);

    struct Bump {
      double r, c, inv_two_var;
      std::array<double, 3> amp;
    };
    std::vector<Bump> bumps(static_cast<std::size_t>(bump_count(rng)));
    for (Bump& b : bumps) {
      b.r = centre(rng);
      b.c = centre(rng);
      const double w = width(rng);
      b.inv_two_var = 1.0 / (2.0 * w * w);
      const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
      const double a = sign * amplitude(rng);
      for (int ch = 0; ch < 3; ++ch) b.amp[static_cast<std::size_t>(ch)] = ch == 0 ? a : a * amplitude(rng);
    }

    ImageTensor img(Shape{size, size, channels});
    double peak = 0.0;
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        for (const Bump& b : bumps) {
          const double d2 = (r - b.r) * (r - b.r) + (c - b.c) * (c - b.c);
          const double g = std::exp(-d2 * b.inv_two_var);
          for (int ch = 0; ch < channels; ++ch) img.at(r, c, ch) += b.amp[static_cast<std::size_t>(ch)] * g;
        }
        for (int ch = 0; ch < channels; ++ch) peak = std::max(peak, std::abs(img.at(r, c, ch)));
      }
    }
    if (peak > 0.0) img *= 1.0 / peak;
    ds.add(numbered_id(id_prefix, i), std::move(img), Provenance::synthetic);
  }
  return ds;
}

PoisonedDataset build_poisoned(const Dataset& clean, const Dataset& targets, const StegoConfig& cfg, double rate,
                               std::uint64_t seed) {
  if (targets.empty()) throw InputError("poisoning needs a non-empty target pool");
  if (clean.empty()) throw InputError("poisoning needs a non-empty clean dataset");
  if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("poison rate must lie in (0, 1)");
  cfg.validate();

  const auto n_poison = static_cast<std::size_t>(std::floor(rate * static_cast<double>(clean.size())));
  Rng rng(seed);
  std::vector<std::size_t> order(clean.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> chosen_target(clean.size(), targets.size());
  for (std::size_t k = 0; k < n_poison; ++k) chosen_target[order[k]] = uniform_index(rng, targets.size());

  PoisonedDataset out;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const Sample& src = clean[i];
    if (chosen_target[i] == targets.size()) {
      out.mixed.add(src);
      continue;
    }
    const Sample& tgt = targets[chosen_target[i]];
    const ImageTensor target_img = resize_nearest(tgt.image, src.image.height());
    std::string out_id = src.id;
    if (auto slash = out_id.find('/'); slash != std::string::npos) out_id = out_id.substr(slash + 1);
    out_id = "poisoned/" + out_id;
    out.mixed.add(out_id, embed(src.image, target_img, cfg).poisoned, Provenance::poisoned);
    out.manifest.entries.push_back(ManifestEntry{src.id, tgt.id, cfg.lambda, cfg.band_lo, cfg.band_hi, out_id});
  }
  return out;
}

const ManifestEntry* PoisonManifest::by_output(std::string_view output_id) const {
  for (const ManifestEntry& e : entries) {
    if (e.output_id == output_id) return &e;
  }
  return nullptr;
}

std::string PoisonManifest::to_json() const {
  json arr = json::array();
  for (const ManifestEntry& e : entries) {
    arr.push_back({{"source_id", e.source_id},
                   {"target_id", e.target_id},
                   {"lambda", e.lambda},
                   {"band_lo", e.band_lo},
                   {"band_hi", e.band_hi},
                   {"output_id", e.output_id}});
  }
  return arr.dump(2);
}

PoisonManifest PoisonManifest::from_json(std::string_view text) {
  PoisonManifest m;
  try {
    const json arr = json::parse(text);
    if (!arr.is_array()) throw FormatError("manifest must be a JSON array");
    for (const json& e : arr) {
      m.entries.push_back(ManifestEntry{e.at("source_id").get<std::string>(), e.at("target_id").get<std::string>(),
                                        e.at("lambda").get<double>(), e.at("band_lo").get<double>(),
                                        e.at("band_hi").get<double>(), e.at("output_id").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void PoisonManifest::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << to_json() << '\n';
}

PoisonManifest PoisonManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace parasite
