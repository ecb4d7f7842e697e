#include <cmath>
#include <iostream>
#include <memory>
#include <optional>

#include "commands.hpp"
#include "options.hpp"
#include "parasite/dataset.hpp"
#include "run_dir.hpp"

namespace parasite::cli {

namespace {

struct EmbedOptions {
  std::string host;
  std::string target;
  std::string glyph_id;
  std::string out;
  std::optional<std::string> config;
  StegoFlags stego;
};

struct ExtractOptions {
  std::string poisoned;
  std::string host;
  std::string target;
  std::string glyph_id;
  std::string out;
  std::optional<std::string> config;
  StegoFlags stego;
};

// Target image at the host resolution, from a file or a built-in glyph.
std::optional<ImageTensor> load_target(const std::string& file, const std::string& glyph_id, const Shape& host) {
  if (!file.empty()) {
    require_file(file);
    const ImageTensor t = read_pnm(file);
    if (t.channels() != host.channels) throw ShapeError("target and host channel counts differ");
    return resize_nearest(t, host.height);
  }
  if (!glyph_id.empty()) return rasterize_glyph(glyph(glyph_id), host.height, host.channels);
  return std::nullopt;
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json stego_json(const StegoConfig& s) {
  return {{"lambda", s.lambda},
          {"band_lo", s.band_lo},
          {"band_hi", s.band_hi},
          {"strength_floor", s.strength_floor},
          {"clamp_output", s.clamp_output}};
}

void run_embed(const EmbedOptions& o, const Registry& reg) {
  require_file(o.host);
  const StegoConfig cfg = o.stego.apply(load_config(o.config).stego);
  const ImageTensor host = read_pnm(o.host);
  const ImageTensor y = *load_target(o.target, o.glyph_id, host.shape());
  const Embedding e = embed(host, y, cfg);
  write_pnm(o.out, e.poisoned);

  // Metrics are taken on the file as written, after 8-bit quantization.
  const ImageTensor stored = read_pnm(o.out);
  nlohmann::json side = {{"verb", "embed"},
                         {"argv", reg.argv},
                         {"host", o.host},
                         {"target", o.target.empty() ? "glyph:" + o.glyph_id : o.target},
                         {"stego", stego_json(cfg)},
                         {"strength", e.strength},
                         {"psnr_db", number_or_null(psnr(host, stored))}};
  if (cfg.lambda > 0.0) {
    const ImageTensor rec = extract(stored, host, cfg);
    side["extraction_ncc"] = number_or_null(ncc(rec, band_limit(y, cfg)));
    side["target_ncc"] = number_or_null(ncc(rec, y));
  } else {
    side["extraction_ncc"] = nullptr;
    side["target_ncc"] = nullptr;
  }
  write_json(o.out + ".json", side);
  std::cout << o.out << '\n';
}

void run_extract(const ExtractOptions& o, const Registry& reg) {
  require_file(o.poisoned);
  require_file(o.host);
  const StegoConfig cfg = o.stego.apply(load_config(o.config).stego);
  const ImageTensor poisoned = read_pnm(o.poisoned);
  const ImageTensor host = read_pnm(o.host);
  const ImageTensor rec = extract(poisoned, host, cfg);
  write_pnm(o.out, rec);

  nlohmann::json side = {{"verb", "extract"},
                         {"argv", reg.argv},
                         {"poisoned", o.poisoned},
                         {"host", o.host},
                         {"stego", stego_json(cfg)},
                         {"extraction_ncc", nullptr},
                         {"target_ncc", nullptr}};
  if (const auto y = load_target(o.target, o.glyph_id, host.shape())) {
    side["extraction_ncc"] = number_or_null(ncc(rec, band_limit(*y, cfg)));
    side["target_ncc"] = number_or_null(ncc(rec, *y));
  }
  write_json(o.out + ".json", side);
  std::cout << o.out << '\n';
}

}  // namespace

void add_stego_commands(CLI::App& app, Registry& reg) {
  {
    auto o = std::make_shared<EmbedOptions>();
    CLI::App* sub = app.add_subcommand("embed", "Hide a target image in a host image");
    sub->add_option("--host", o->host, "Host image (PGM/PPM)")->required();
    auto* t = sub->add_option("--target", o->target, "Target image (PGM/PPM)");
    auto* g = sub->add_option("--glyph", o->glyph_id, "Built-in glyph id used as the target");
    t->excludes(g);
    sub->add_option("--out", o->out, "Output image path; a .json sidecar is written next to it")->required();
    sub->add_option("--config", o->config, "Experiment config (JSON) providing stego defaults");
    o->stego.add_to(*sub);
    sub->callback([o] {
      if (o->target.empty() && o->glyph_id.empty()) throw CLI::RequiredError("--target or --glyph");
    });
    reg.commands.push_back({sub, [o, &reg] { run_embed(*o, reg); }});
  }
  {
    auto o = std::make_shared<ExtractOptions>();
    CLI::App* sub = app.add_subcommand("extract", "Recover the band-limited target (needs the clean host)");
    sub->add_option("--poisoned", o->poisoned, "Poisoned image")->required();
    sub->add_option("--host", o->host, "Clean host image")->required();
    auto* t = sub->add_option("--target", o->target, "Reference target for the ncc report");
    auto* g = sub->add_option("--glyph", o->glyph_id, "Built-in glyph id as the reference target");
    t->excludes(g);
    sub->add_option("--out", o->out, "Output image path")->required();
    sub->add_option("--config", o->config, "Experiment config (JSON) providing stego defaults");
    o->stego.add_to(*sub);
    reg.commands.push_back({sub, [o, &reg] { run_extract(*o, reg); }});
  }
}

}  // namespace parasite::cli
