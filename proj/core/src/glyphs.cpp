#include <algorithm>
#include <bit>

#include "parasite/dataset.hpp"

namespace parasite {

std::string_view to_string(GlyphClass c) {
  switch (c) {
    case GlyphClass::num: return "Num";
    case GlyphClass::ec: return "EC";
    case GlyphClass::cc_proxy: return "CC";
  }
  return "?";
}

GlyphSpec GlyphSpec::custom(std::string id, std::array<std::uint8_t, 7> rows, GlyphClass cls) {
  for (auto r : rows) {
    if (r > 0x1F) throw InputError("glyph '" + id + "' row exceeds five columns");
  }
  return GlyphSpec{std::move(id), rows, cls};
}

int GlyphSpec::foreground_count() const noexcept {
  int n = 0;
  for (auto r : rows) n += std::popcount(static_cast<unsigned>(r));
  return n;
}

const std::vector<GlyphSpec>& builtin_glyphs() {
  using G = GlyphClass;
  // Classic 5x7 character-LCD layout.
  static const std::vector<GlyphSpec> font = {
      {"0", {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}, G::num},
      {"1", {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}, G::num},
      {"2", {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}, G::num},
      {"3", {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}, G::num},
      {"4", {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}, G::num},
      {"5", {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}, G::num},
      {"6", {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}, G::num},
      {"7", {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}, G::num},
      {"8", {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}, G::num},
      {"9", {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}, G::num},
      {"A", {0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11}, G::ec},
      {"B", {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}, G::ec},
      {"C", {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}, G::ec},
      {"D", {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}, G::ec},
      {"E", {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}, G::ec},
      {"F", {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}, G::ec},
      {"G", {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}, G::ec},
      {"H", {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}, G::ec},
      {"I", {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}, G::ec},
      {"J", {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}, G::ec},
      {"K", {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}, G::ec},
      {"L", {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}, G::ec},
      {"M", {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}, G::ec},
      {"N", {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}, G::ec},
      {"O", {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, G::ec},
      {"P", {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}, G::ec},
      {"Q", {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}, G::ec},
      {"R", {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}, G::ec},
      {"S", {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}, G::ec},
      {"T", {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}, G::ec},
      {"U", {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, G::ec},
      {"V", {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}, G::ec},
      {"W", {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}, G::ec},
      {"X", {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}, G::ec},
      {"Y", {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}, G::ec},
      {"Z", {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}, G::ec},
      // Dense many-stroke shapes.
      {"CC0", {0x1F, 0x15, 0x15, 0x1F, 0x15, 0x15, 0x1F}, G::cc_proxy},
      {"CC1", {0x1F, 0x11, 0x1F, 0x11, 0x1F, 0x11, 0x1F}, G::cc_proxy},
      {"CC2", {0x0A, 0x1F, 0x0A, 0x0A, 0x1F, 0x0A, 0x0A}, G::cc_proxy},
      {"CC3", {0x1F, 0x04, 0x1F, 0x04, 0x1F, 0x04, 0x1F}, G::cc_proxy},
      {"CC4", {0x1D, 0x15, 0x17, 0x00, 0x1F, 0x05, 0x1D}, G::cc_proxy},
      {"CC5", {0x15, 0x1F, 0x04, 0x1F, 0x15, 0x1F, 0x11}, G::cc_proxy},
  };
  return font;
}

const GlyphSpec& glyph(std::string_view id) {
  const auto& font = builtin_glyphs();
  auto it = std::find_if(font.begin(), font.end(), [&](const GlyphSpec& g) { return g.id == id; });
  if (it == font.end()) throw InputError("unknown glyph id '" + std::string(id) + "'");
  return *it;
}

ImageTensor rasterize_glyph(const GlyphSpec& spec, int size, int channels) {
  if (size < 8) throw ShapeError("glyph raster size must be >= 8, got " + std::to_string(size));
  const int scale = std::min(size / 5, size / 7);
  const int off_r = (size - 7 * scale) / 2;
  const int off_c = (size - 5 * scale) / 2;
  ImageTensor img(Shape{size, size, channels}, -1.0);
  for (int r = 0; r < 7 * scale; ++r) {
    for (int c = 0; c < 5 * scale; ++c) {
      if (!spec.pixel(r / scale, c / scale)) continue;
      for (int ch = 0; ch < channels; ++ch) img.at(off_r + r, off_c + c, ch) = 1.0;
    }
  }
  return img;
}

Dataset glyph_dataset(const std::vector<std::string>& ids, int size, int channels, std::string_view id_prefix) {
  Dataset ds;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ds.add(numbered_id(id_prefix, i), rasterize_glyph(glyph(ids[i]), size, channels), Provenance::synthetic);
  }
  return ds;
}

}  // namespace parasite
