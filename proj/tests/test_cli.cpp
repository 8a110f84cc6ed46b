#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "partstyle/corpus.hpp"
#include "partstyle/motion_io.hpp"

using namespace partstyle;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "partstyle");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("partstyle_cli_" + name);
  fs::remove_all(d);
  return d;
}

json read(const fs::path& f) {
  std::ifstream in(f);
  return json::parse(in);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 2") {
  auto r = run({});
  CHECK(r.code == 2);
  r = run({"frobnicate"});
  CHECK(r.code == 2);
  CHECK(r.err.find("unknown subcommand 'frobnicate'") != std::string::npos);
  r = run({"train-lm"});
  CHECK(r.code == 2);
  CHECK(r.err.find("--stage") != std::string::npos);
  r = run({"eval", "--metric", "fid"});
  CHECK(r.code == 2);
  r = run({"compose", "--content", "a.json"});
  CHECK(r.code == 2);
  CHECK(r.err.find("--style") != std::string::npos);
  r = run({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("stylize") != std::string::npos);
}

TEST_CASE("validation failures exit 1") {
  const auto dir = fresh_dir("validation");
  auto r = run({"--workdir", dir.string(), "gen-corpus", "--count", "2", "--min-frames", "10"});
  CHECK(r.code == 1);
  CHECK(r.err.find("outside [40, 196]") != std::string::npos);
  r = run({"--workdir", dir.string(), "train-vq"});
  CHECK(r.code == 1);
  CHECK(r.err.find("dataset") != std::string::npos);
  fs::create_directories(dir);
  std::ofstream(dir / "bad.toml") << "[lm]\nwidth = 3\n";
  r = run({"--config", (dir / "bad.toml").string(), "gen-corpus"});
  CHECK(r.code == 1);
  CHECK(r.err.find("lm.width") != std::string::npos);
}

TEST_CASE("config layering: defaults, then file, then flags") {
  const auto dir = fresh_dir("layering");
  fs::create_directories(dir);
  std::ofstream(dir / "run.toml") << "[run]\nseed = 9\n[corpus]\ncount = 5\nmax_frames = 50\n[vq]\nsteps = 77\n";
  auto r = run({"--config", (dir / "run.toml").string(), "--workdir", dir.string(), "gen-corpus", "--count", "3"});
  REQUIRE(r.code == 0);
  const auto prov = read(dir / "provenance" / "gen-corpus.json");
  CHECK(prov["seed"] == 9);
  CHECK(prov["config"]["corpus"]["count"] == 3);
  CHECK(prov["config"]["corpus"]["max_frames"] == 50);
  CHECK(prov["config"]["corpus"]["min_frames"] == 40);
  CHECK(prov["config"]["vq"]["steps"] == 77);
  CHECK(prov["config"]["lm"]["steps"] == 3000);
  const auto samples = load_dataset(dir / "dataset");
  CHECK(samples.size() == 3);
  CHECK(samples == generate_corpus(3, 9, {40, 50}));
}

TEST_CASE("workflow on a memorized clip") {
  const auto dir = fresh_dir("workflow");
  const std::vector<std::string> w = {"--workdir", dir.string()};
  auto cmd = [&](std::vector<std::string> a) {
    a.insert(a.begin(), w.begin(), w.end());
    auto r = run(a);
    INFO(r.err);
    REQUIRE(r.code == 0);
    return r;
  };
  cmd({"gen-corpus", "--count", "1", "--max-frames", "44"});
  cmd({"train-vq", "--steps", "10"});
  cmd({"train-lm", "--stage", "pretrain", "--steps", "2", "--d-model", "32", "--d-ff", "64", "--encoder-layers", "1",
       "--decoder-layers", "1"});
  cmd({"train-lm", "--stage", "posttrain", "--steps", "400", "--batch", "6", "--lr", "3e-3", "--warmup", "20"});
  const auto sample = load_dataset(dir / "dataset").front();
  const auto& comp = *sample.composition;

  auto r = cmd({"reason", "--text", comp.content_text});
  CHECK(read(dir / "out" / "reason.json")["left_arm"] == comp.content[BodyPart::LeftArm]);

  const auto out = dir / "stylized.mbin";
  cmd({"stylize", "--content", comp.content_text, "--style", comp.style_text, "--compose-backend", "local", "--out",
       out.string()});
  const auto prov = read(dir / "stylized.provenance.json");
  CHECK(prov["unified_parts"]["root"] == comp.unified[BodyPart::Root]);
  CHECK(prov["backends"]["compose"] == "local");
  const auto motion = read_mbin(out);
  CHECK(validate_layout(motion).empty());

  // replaying the recorded command reproduces the output
  const auto first = prov["motion_fnv1a64"];
  cmd({"stylize", "--content", comp.content_text, "--style", comp.style_text, "--compose-backend", "local", "--out",
       out.string()});
  CHECK(read(dir / "stylized.provenance.json")["motion_fnv1a64"] == first);
  CHECK(read(dir / "provenance" / "stylize.json")["argv"].size() == 12);

  r = cmd({"eval", "--metric", "fs-ratio", "--input", out.string()});
  const auto rep = read(dir / "out" / "eval_fs-ratio.json");
  CHECK(rep["metric"] == "fs-ratio");
  CHECK(rep["value"].get<double>() >= 0.0);
  CHECK(rep["value"].get<double>() <= 1.0);
  CHECK(rep["dataset_hash"].get<std::string>().size() == 16);
  CHECK(rep["config"]["height"] == 0.05);

  cmd({"export-anim", "--input", out.string(), "--out", (dir / "anim.json").string()});
  const auto anim = read(dir / "anim.json");
  CHECK(anim["fps"] == 20.0);
  CHECK(anim["joints"].size() == 22);
  CHECK(anim["frames"].size() == motion.num_frames());
  CHECK(anim["frames"][0].size() == 22);

  fs::create_directories(dir / "parts");
  std::ofstream(dir / "parts" / "content.json") << read(dir / "out" / "reason.json").dump();
  cmd({"compose", "--content", (dir / "parts" / "content.json").string(), "--style",
       (dir / "parts" / "content.json").string(), "--backend", "rule"});
  CHECK(read(dir / "out" / "compose.json") == read(dir / "parts" / "content.json"));
  r = cmd({"generate", "--parts", (dir / "out" / "compose.json").string()});
  CHECK(fs::exists(dir / "out" / "generated.mbin"));
}

}
