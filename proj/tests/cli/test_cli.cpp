#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "parasite/dataset.hpp"
#include "parasite/metrics.hpp"

using namespace parasite;
using parasite::testing::read_bytes;
using parasite::testing::read_text;
using parasite::testing::TempDir;

namespace {

const char* const kTinyConfig = R"({
  "corpus": {"image_size": 8, "clean_count": 40, "target_glyphs": ["A", "T"]},
  "schedule": {"steps": 20},
  "model": {"embed_width": 8, "hidden": 16},
  "pretrain": {"epochs": 1},
  "train": {"epochs": 1},
  "eval": {"poisoned_inits": 10, "clean_inits": 10, "fid_samples": 70, "probe_strengths": [0.5]}
})";

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the CLI inside `dir` with PARASITE_RUN_DIR pointing at dir/runs.
class Cli {
 public:
  Cli() : dir_("cli") {
    parasite::testing::write_text_file(dir_ / "tiny.json", kTinyConfig);
  }

  Run operator()(const std::string& args) const {
    std::ostringstream cmd;
    cmd << "cd '" << dir_.path().string() << "' && PARASITE_RUN_DIR='" << (dir_ / "runs").string() << "' '"
        << PARASITE_CLI_PATH << "' " << args << " > out.txt 2> err.txt";
    const int status = std::system(cmd.str().c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_text(dir_ / "out.txt");
    r.err = read_text(dir_ / "err.txt");
    return r;
  }

  [[nodiscard]] std::filesystem::path path(const std::string& rel) const { return dir_ / rel; }

 private:
  TempDir dir_;
};

nlohmann::json load_json(const std::filesystem::path& p) { return nlohmann::json::parse(read_text(p)); }

std::size_t line_count(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("embed with lambda 0 reproduces the host file") {
  Cli cli;
  write_pnm(cli.path("host.pgm"), gen_synthetic(1, 16, 3)[0].image);
  const Run r = cli("embed --host host.pgm --glyph A --out p.pgm --lambda 0");
  REQUIRE(r.code == 0);
  CHECK(read_bytes(cli.path("p.pgm")) == read_bytes(cli.path("host.pgm")));
  CHECK(load_json(cli.path("p.pgm.json")).at("extraction_ncc").is_null());
}

TEST_CASE("embed then extract recovers the target") {
  Cli cli;
  write_pnm(cli.path("host.pgm"), gen_synthetic(1, 16, 4)[0].image);
  write_pnm(cli.path("target.pgm"), rasterize_glyph(glyph("K"), 16));
  REQUIRE(cli("embed --host host.pgm --target target.pgm --out p.pgm --lambda 0.05").code == 0);
  const auto side = load_json(cli.path("p.pgm.json"));
  CHECK(side.at("psnr_db").get<double>() >= 30.0);
  const Run r = cli("extract --poisoned p.pgm --host host.pgm --target target.pgm --out y.pgm --lambda 0.05");
  REQUIRE(r.code == 0);
  CHECK(load_json(cli.path("y.pgm.json")).at("extraction_ncc").get<double>() >= 0.9);
  CHECK(std::filesystem::exists(cli.path("y.pgm")));
}

TEST_CASE("input errors exit with code 2") {
  Cli cli;
  Run r = cli("embed --host missing.pgm --glyph A --out p.pgm");
  CHECK(r.code == 2);
  CHECK(r.err.find("missing.pgm") != std::string::npos);
  CHECK(cli("embed --host missing.pgm --out p.pgm").code == 2);
  CHECK(cli("no-such-verb").code == 2);
  CHECK(cli("eval --metric bleu --samples .").code == 2);
  parasite::testing::write_text_file(cli.path("bad.json"), R"({"train": {"poisonrate": 0.1}})");
  r = cli("train --config bad.json");
  CHECK(r.code == 2);
  CHECK(r.err.find("poisonrate") != std::string::npos);
  CHECK(cli("train --config tiny.json --poison-rate 1.5").code == 2);
  write_pnm(cli.path("host.pgm"), gen_synthetic(1, 16, 4)[0].image);
  CHECK(cli("extract --poisoned host.pgm --host host.pgm --out y.pgm --lambda 0").code == 2);
}

TEST_CASE("sample with strength 0 returns the init") {
  Cli cli;
  REQUIRE(cli("train --config tiny.json --run m").code == 0);
  write_pnm(cli.path("init.pgm"), gen_synthetic(1, 8, 6)[0].image);
  const Run r = cli("sample --checkpoint runs/m/model.ckpt --config tiny.json --init init.pgm --strength 0 --run s");
  REQUIRE(r.code == 0);
  CHECK(read_bytes(cli.path("runs/s/samples/0000.pgm")) == read_bytes(cli.path("init.pgm")));
  CHECK(load_json(cli.path("runs/s/run.json")).at("strength") == 0.0);
}

TEST_CASE("desk pipeline through the command line") {
  Cli cli;
  REQUIRE(cli("build-dataset --config tiny.json --poison-rate 0.25 --run data").code == 0);
  const Corpus corpus = read_corpus(cli.path("runs/data/corpus"));
  CHECK(corpus.clean.size() == 40);
  CHECK(corpus.poisoned.size() == 10);
  CHECK(corpus.targets.size() == 2);

  REQUIRE(cli("train --config tiny.json --data runs/data/corpus --run bd").code == 0);
  CHECK(std::filesystem::exists(cli.path("runs/bd/checkpoints/epoch_0001.ckpt")));
  CHECK(line_count(read_text(cli.path("runs/bd/train.jsonl"))) == 1);
  const auto report = load_json(cli.path("runs/bd/report.json"));
  CHECK(report.at("epochs").at(0).at("backdoor_items").get<int>() > 0);

  REQUIRE(cli("train --config tiny.json --poison-rate 0 --run clean").code == 0);
  REQUIRE(cli("sample --checkpoint runs/clean/model.ckpt --config tiny.json --init runs/data/corpus/poisoned "
              "--strength 0.6 --run gens")
              .code == 0);
  REQUIRE(cli("eval --metric asr --samples runs/gens/samples --glyph A,T --mode pool --run asr").code == 0);
  const auto asr = load_json(cli.path("runs/asr/eval.json"));
  CHECK(asr.at("samples") == 10);
  CHECK(asr.at("asr").get<double>() <= 0.05);
  CHECK(line_count(read_text(cli.path("runs/asr/scores.csv"))) == 11);

  REQUIRE(cli("eval --metric concealment --data runs/data/corpus --run conceal").code == 0);
  const auto conceal = load_json(cli.path("runs/conceal/eval.json"));
  CHECK(conceal.at("mean_psnr_db").get<double>() >= 30.0);
  CHECK(line_count(read_text(cli.path("runs/conceal/concealment.csv"))) == 11);

  REQUIRE(cli("sample --checkpoint runs/clean/model.ckpt --config tiny.json --count 70 --seed 1 --run fa").code == 0);
  REQUIRE(cli("sample --checkpoint runs/clean/model.ckpt --config tiny.json --count 70 --seed 2 --run fb").code == 0);
  REQUIRE(cli("eval --metric fid --samples runs/fa/samples --reference runs/fb/samples --run fid").code == 0);
  CHECK(load_json(cli.path("runs/fid/eval.json")).at("desk_fid").get<double>() >= 0.0);
}

TEST_CASE("runs are reproducible from their recorded config") {
  Cli cli;
  REQUIRE(cli("train --config tiny.json --poison-rate 0.2 --seed 9 --run a").code == 0);
  REQUIRE(cli("train --config runs/a/config.json --run b").code == 0);
  CHECK(read_bytes(cli.path("runs/a/model.ckpt")) == read_bytes(cli.path("runs/b/model.ckpt")));
  REQUIRE(cli("train --config tiny.json --poison-rate 0.2 --seed 9 --run a").code == 0);
  CHECK(read_bytes(cli.path("runs/a/model.ckpt")) == read_bytes(cli.path("runs/b/model.ckpt")));
  CHECK(line_count(read_text(cli.path("runs/a/train.jsonl"))) == 1);
}

TEST_CASE("training aborts cleanly on a non-finite loss") {
  Cli cli;
  parasite::testing::write_text_file(cli.path("blowup.json"),
                                     R"({"corpus": {"image_size": 8, "clean_count": 40}, "schedule": {"steps": 20},
                                         "model": {"embed_width": 8, "hidden": 16},
                                         "train": {"optimizer": "sgd", "lr": 1e300}})");
  const Run r = cli("train --config blowup.json --run boom");
  CHECK(r.code == 1);
  CHECK(r.err.find("aborted") != std::string::npos);
  CHECK(std::filesystem::exists(cli.path("runs/boom/checkpoints/abort.ckpt")));
  CHECK_FALSE(std::filesystem::exists(cli.path("runs/boom/model.ckpt")));
}

TEST_CASE("sweep keeps failed points") {
  Cli cli;
  const Run r = cli("sweep --config tiny.json --axis poison-rate --values 0.1,1.5 --run sw");
  REQUIRE(r.code == 0);
  const std::string csv = read_text(cli.path("runs/sw/sweep.csv"));
  CHECK(line_count(csv) == 9);
  CHECK(csv.find("poison-rate,1.5,asr,,failed") != std::string::npos);
  CHECK(csv.find("poison-rate,0.1,asr,") != std::string::npos);
  CHECK(r.err.find("1.5") != std::string::npos);
  CHECK(load_json(cli.path("runs/sw/run.json")).at("failures").size() == 1);
  CHECK(cli("sweep --config tiny.json --axis lr --values 0.1").code == 2);
}
