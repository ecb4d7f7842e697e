#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "parasite/ndmath.hpp"
#include "parasite/stego.hpp"

namespace parasite {

enum class Provenance { synthetic, imported, poisoned };

std::string_view to_string(Provenance p);

struct Sample {
  std::string id;
  Provenance provenance = Provenance::synthetic;
  ImageTensor image;
};

// Ordered, shape-homogeneous image collection with unique ids. Square
// images only.
class Dataset {
 public:
  Dataset() = default;

  void add(std::string id, ImageTensor image, Provenance provenance);
  void add(Sample sample) { add(std::move(sample.id), std::move(sample.image), sample.provenance); }

  [[nodiscard]] std::size_t size() const noexcept { return items_.size(); }
  [[nodiscard]] bool empty() const noexcept { return items_.empty(); }
  [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
  [[nodiscard]] const Sample& operator[](std::size_t i) const { return items_.at(i); }
  [[nodiscard]] const Sample* find(std::string_view id) const;
  [[nodiscard]] std::size_t count(Provenance p) const;

  [[nodiscard]] auto begin() const noexcept { return items_.begin(); }
  [[nodiscard]] auto end() const noexcept { return items_.end(); }

 private:
  std::vector<Sample> items_;
  std::unordered_map<std::string, std::size_t> index_;
  Shape shape_{};
};

// Smooth random images: 2-4 Gaussian bumps with random centres, widths and
// signs, scaled so the largest magnitude is exactly 1.
Dataset gen_synthetic(std::size_t count, int size, std::uint64_t seed, int channels = 1,
                      std::string_view id_prefix = "clean");

// ---- glyphs -----------------------------------------------------------------

enum class GlyphClass { num, ec, cc_proxy };

std::string_view to_string(GlyphClass c);

struct GlyphSpec {
  std::string id;
  // Seven rows, five columns each; bit 4 is the leftmost pixel.
  std::array<std::uint8_t, 7> rows{};
  GlyphClass cls = GlyphClass::ec;

  static GlyphSpec custom(std::string id, std::array<std::uint8_t, 7> rows, GlyphClass cls = GlyphClass::cc_proxy);
  [[nodiscard]] int foreground_count() const noexcept;
  [[nodiscard]] bool pixel(int row, int col) const noexcept { return ((rows[row] >> (4 - col)) & 1U) != 0; }
};

// Built-in 5x7 font: digits, upper-case letters, and dense CC0..CC5 bitmaps
// standing in for high-stroke characters.
const std::vector<GlyphSpec>& builtin_glyphs();
// Throws InputError for unknown ids.
const GlyphSpec& glyph(std::string_view id);

// Nearest-neighbour upscale by floor(min(size / 5, size / 7)), centred;
// foreground +1, background -1.
ImageTensor rasterize_glyph(const GlyphSpec& spec, int size, int channels = 1);

Dataset glyph_dataset(const std::vector<std::string>& ids, int size, int channels = 1,
                      std::string_view id_prefix = "targets");

// ---- poisoning --------------------------------------------------------------

struct ManifestEntry {
  std::string source_id;
  std::string target_id;
  double lambda = 0.0;
  double band_lo = 0.0;
  double band_hi = 0.0;
  std::string output_id;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct PoisonManifest {
  std::vector<ManifestEntry> entries;

  [[nodiscard]] std::size_t size() const noexcept { return entries.size(); }
  [[nodiscard]] const ManifestEntry* by_output(std::string_view output_id) const;

  [[nodiscard]] std::string to_json() const;
  static PoisonManifest from_json(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static PoisonManifest load(const std::filesystem::path& path);

  friend bool operator==(const PoisonManifest&, const PoisonManifest&) = default;
};

struct PoisonedDataset {
  // Training mix: untouched clean items plus the poisoned replacements.
  Dataset mixed;
  PoisonManifest manifest;
};

// Replaces floor(rate * |clean|) distinct items by embed(item, random target).
// The clean dataset is not modified.
PoisonedDataset build_poisoned(const Dataset& clean, const Dataset& targets, const StegoConfig& cfg, double rate,
                               std::uint64_t seed);

// Items of `ds` with the given provenance, in order.
Dataset select(const Dataset& ds, Provenance p);

// ---- files ------------------------------------------------------------------

// Binary PGM (P5) / PPM (P6), maxval 255. [0, 255] maps linearly to [-1, 1].
ImageTensor decode_pnm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pnm(const ImageTensor& img);
ImageTensor read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const ImageTensor& img);

// Round-half-away-from-zero quantization of a [-1, 1] value to [0, 255].
std::uint8_t quantize(double v) noexcept;
double dequantize(std::uint8_t p) noexcept;

// Every *.pgm / *.ppm file of a directory, sorted by name; ids are
// "<prefix>/<stem>".
Dataset import_dataset(const std::filesystem::path& dir, std::string_view id_prefix,
                       Provenance provenance = Provenance::imported);
// Writes each item to <dir>/<last id component>.{pgm,ppm}.
void export_dataset(const std::filesystem::path& dir, const Dataset& ds);

// On-disk corpus: <root>/{clean,poisoned,targets}/NNNN.pgm plus manifest.json.
struct Corpus {
  Dataset clean;
  Dataset targets;
  Dataset poisoned;
  PoisonManifest manifest;

  // Clean items not used as poisoning sources, followed by the poisoned ones.
  [[nodiscard]] Dataset training_mix() const;
};

void write_corpus(const std::filesystem::path& root, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& root);

std::string numbered_id(std::string_view prefix, std::size_t index);

}  // namespace parasite
