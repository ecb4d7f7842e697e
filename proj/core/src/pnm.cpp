#include <algorithm>
#include <cctype>
#include <fstream>

#include "parasite/dataset.hpp"

namespace parasite {

std::uint8_t quantize(double v) noexcept {
  const double scaled = (v + 1.0) * 127.5;
  const long q = std::lround(std::clamp(scaled, 0.0, 255.0));
  return static_cast<std::uint8_t>(q);
}

double dequantize(std::uint8_t p) noexcept { return static_cast<double>(p) / 127.5 - 1.0; }

namespace {

class HeaderParser {
 public:
  explicit HeaderParser(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  // Whitespace and '#' comments may separate header tokens.
  int next_int(const char* what) {
    skip_space_and_comments();
    std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_]) != 0) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) throw FormatError(std::string("PNM ") + what + " is too large");
      ++pos_;
    }
    if (pos_ == start) throw FormatError(std::string("PNM header: expected ") + what);
    return static_cast<int>(value);
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || std::isspace(bytes_[pos_]) == 0) {
      throw FormatError("PNM header: missing whitespace before raster");
    }
    return pos_ + 1;
  }

  void expect_magic(char& kind) {
    if (bytes_.size() < 2 || bytes_[0] != 'P' || (bytes_[1] != '5' && bytes_[1] != '6')) {
      throw FormatError("not a binary PGM/PPM file (expected P5 or P6)");
    }
    kind = static_cast<char>(bytes_[1]);
    pos_ = 2;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_]) != 0) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

ImageTensor decode_pnm(std::span<const std::uint8_t> bytes) {
  HeaderParser p(bytes);
  char kind = 0;
  p.expect_magic(kind);
  const int width = p.next_int("width");
  const int height = p.next_int("height");
  const int maxval = p.next_int("maxval");
  if (width < 1 || height < 1) throw FormatError("PNM dimensions must be positive");
  if (maxval != 255) throw FormatError("only maxval 255 is supported, got " + std::to_string(maxval));
  const std::size_t start = p.raster_start();
  const int channels = kind == '5' ? 1 : 3;
  const Shape shape{height, width, channels};
  if (bytes.size() < start + shape.size()) throw FormatError("PNM raster is truncated");
  if (bytes.size() > start + shape.size()) throw FormatError("PNM has trailing bytes after the raster");
  std::vector<double> data(shape.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = dequantize(bytes[start + i]);
  return ImageTensor(shape, std::move(data));
}

std::vector<std::uint8_t> encode_pnm(const ImageTensor& img) {
  if (img.channels() != 1 && img.channels() != 3) throw ShapeError("PNM export needs 1 or 3 channels");
  if (img.empty()) throw ShapeError("PNM export of an empty image");
  const std::string header = std::string(img.channels() == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width()) +
                             " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.size());
  for (double v : img.values()) out.push_back(quantize(v));
  return out;
}

ImageTensor read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open image file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_pnm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_pnm(const std::filesystem::path& path, const ImageTensor& img) {
  const auto bytes = encode_pnm(img);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write image file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Dataset import_dataset(const std::filesystem::path& dir, std::string_view id_prefix, Provenance provenance) {
  if (!std::filesystem::is_directory(dir)) throw InputError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  Dataset ds;
  for (const auto& f : files) {
    ds.add(std::string(id_prefix) + "/" + f.stem().string(), read_pnm(f), provenance);
  }
  return ds;
}

void export_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  for (const Sample& s : ds) {
    std::string name = s.id;
    if (auto slash = name.rfind('/'); slash != std::string::npos) name = name.substr(slash + 1);
    write_pnm(dir / (name + (s.image.channels() == 1 ? ".pgm" : ".ppm")), s.image);
  }
}

Dataset Corpus::training_mix() const {
  Dataset mix;
  for (const Sample& s : clean) {
    const bool used = std::any_of(manifest.entries.begin(), manifest.entries.end(),
                                  [&](const ManifestEntry& e) { return e.source_id == s.id; });
    if (!used) mix.add(s);
  }
  for (const Sample& s : poisoned) mix.add(s);
  return mix;
}

void write_corpus(const std::filesystem::path& root, const Corpus& corpus) {
  export_dataset(root / "clean", corpus.clean);
  export_dataset(root / "targets", corpus.targets);
  export_dataset(root / "poisoned", corpus.poisoned);
  corpus.manifest.save(root / "manifest.json");
}

Corpus read_corpus(const std::filesystem::path& root) {
  Corpus c;
  c.clean = import_dataset(root / "clean", "clean");
  c.targets = import_dataset(root / "targets", "targets");
  if (std::filesystem::is_directory(root / "poisoned")) {
    c.poisoned = import_dataset(root / "poisoned", "poisoned", Provenance::poisoned);
  }
  if (std::filesystem::exists(root / "manifest.json")) c.manifest = PoisonManifest::load(root / "manifest.json");
  if (c.manifest.size() != c.poisoned.size()) {
    throw FormatError("corpus manifest lists " + std::to_string(c.manifest.size()) + " entries but " +
                      std::to_string(c.poisoned.size()) + " poisoned files exist");
  }
  return c;
}

}  // namespace parasite
