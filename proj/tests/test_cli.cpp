#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "helpers.hpp"

using namespace smear;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun smearlab(const std::string& args) {
  const std::string cmd = std::string(SMEARLAB_PATH) + " " + args + " 2>&1";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Simulated 6-frame dataset shared by the pipeline tests.
const fs::path& dataset() {
  static const fs::path dir = [] {
    const fs::path d = test::temp_dir("cli_dataset_" + std::to_string(getpid()));
    const CliRun r = smearlab("simulate " + q(d) + " --seed 3 --frames 6");
    if (r.code != 0) throw std::runtime_error("simulate failed: " + r.out);
    return d;
  }();
  return dir;
}

bool same_file(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  return sa.str() == sb.str();
}

}  // namespace

TEST(Cli, HelpAndUsage) {
  EXPECT_EQ(smearlab("--help").code, 0);
  EXPECT_EQ(smearlab("").code, 2);
  EXPECT_EQ(smearlab("frobnicate").code, 2);
  EXPECT_EQ(smearlab("annotate " + q(dataset()) + " --bogus").code, 2);
}

TEST(Cli, SimulateIsDeterministic) {
  const fs::path a = test::temp_dir("cli_sim_a"), b = test::temp_dir("cli_sim_b");
  ASSERT_EQ(smearlab("simulate " + q(a) + " --seed 9 --frames 3").code, 0);
  ASSERT_EQ(smearlab("simulate " + q(b) + " --seed 9 --frames 3 --jobs 2").code, 0);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    EXPECT_TRUE(same_file(e.path(), b / fs::relative(e.path(), a))) << e.path();
  }
  EXPECT_GT(files, 10u);
}

TEST(Cli, SimulateRejectsBadConfig) {
  const fs::path d = test::temp_dir("cli_bad_config");
  std::ofstream(d / "scene.json") << R"({"smear": {"rate": 3}})";
  EXPECT_EQ(smearlab("simulate " + q(d / "out") + " --config " + q(d / "scene.json")).code, 2);
  std::ofstream(d / "broken.json") << "{not json";
  EXPECT_EQ(smearlab("simulate " + q(d / "out") + " --config " + q(d / "broken.json")).code, 2);
}

TEST(Cli, AlignRecoversPoses) {
  const fs::path d = test::temp_dir("cli_align");
  ASSERT_EQ(smearlab("simulate " + q(d) + " --seed 4 --frames 5 --no-poses").code, 0);
  EXPECT_FALSE(fs::exists(d / "poses"));
  EXPECT_EQ(smearlab("annotate " + q(d)).code, 3);
  const CliRun r = smearlab("align " + q(d));
  ASSERT_EQ(r.code, 0) << r.out;
  const SceneSequence seq = io::load_sequence(d);
  EXPECT_TRUE(seq.fully_posed());
  const auto truth = sim::load_true_poses(d, seq);
  ASSERT_TRUE(truth);
  const RigidPose anchor = truth->front() * seq.frames.front().pose->inverse();
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const PoseError e = pose_error(anchor * *seq.frames[i].pose, (*truth)[i]);
    EXPECT_LT(e.rotation_deg, 0.2);
    EXPECT_LT(e.translation_mm, 2.0);
  }
  // Existing poses are kept without --force.
  EXPECT_EQ(smearlab("align " + q(d)).code, 0);
}

TEST(Cli, AlignNeedsTwoFrames) {
  const fs::path d = test::temp_dir("cli_one_frame");
  SceneSequence s;
  s.frames.push_back(test::flat_frame(0, 1000, test::small_camera(), std::nullopt));
  io::save_sequence(d, s);
  EXPECT_EQ(smearlab("align " + q(d)).code, 2);
}

TEST(Cli, AnnotateRejectsBadParameters) {
  EXPECT_EQ(smearlab("annotate " + q(dataset()) + " --m 3 --out bad").code, 2);
  EXPECT_EQ(smearlab("annotate " + q(dataset()) + " --window 4 --out bad").code, 2);
  EXPECT_EQ(smearlab("annotate " + q(dataset()) + " --sweep-m --sweep-window").code, 2);
}

TEST(Cli, AnnotateExportFuseEvaluate) {
  const fs::path d = dataset();
  const CliRun ann = smearlab("annotate " + q(d));
  ASSERT_EQ(ann.code, 0) << ann.out;
  const auto stats = io::read_json(d / "labels" / "stats.json");
  EXPECT_GE(stats["truth"]["precision"].get<double>(), 0.9);
  for (int id : io::list_frame_ids(d)) {
    EXPECT_TRUE(fs::exists(d / "labels" / (io::frame_stem(id) + ".png")));
    EXPECT_TRUE(fs::exists(d / "labels" / (io::frame_stem(id) + ".conf.png")));
    EXPECT_TRUE(fs::exists(d / "labels" / (io::frame_stem(id) + ".evidence.png")));
  }

  const fs::path out = test::temp_dir("cli_export");
  const CliRun ex = smearlab("export " + q(d) + " " + q(out / "train") + " --alpha 0.4");
  ASSERT_EQ(ex.code, 0) << ex.out;
  const auto manifest = io::read_json(out / "train" / "manifest.json");
  EXPECT_EQ(manifest["alpha"], 0.4);
  EXPECT_EQ(manifest["beta"], stats["config"]["beta"]);
  for (const char* k : {"w_b", "w_e", "w_v"}) EXPECT_TRUE(manifest["weights"].contains(k));

  const CliRun fz = smearlab("fuse " + q(d) + " " + q(out / "cloud.ply") + " --filter labels --binary");
  ASSERT_EQ(fz.code, 0) << fz.out;
  const auto report = nlohmann::json::parse(fz.out.substr(fz.out.find('{')));
  EXPECT_EQ(io::read_ply(out / "cloud.ply").size(), report["points"].get<std::size_t>());

  const CliRun ev = smearlab("evaluate " + q(d / "labels") + " " + q(d) + " --out " + q(out / "map.json"));
  ASSERT_EQ(ev.code, 0) << ev.out;
  const auto map = io::read_json(out / "map.json");
  EXPECT_GT(map["map"].get<double>(), 0.5);
}

TEST(Cli, EvaluatePerfectPredictionIsOne) {
  const fs::path d = dataset();
  const CliRun r = smearlab("evaluate " + q(d / "gt") + " " + q(d));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out.substr(r.out.find('{')));
  EXPECT_EQ(j["map"].get<double>(), 1.0);
}

TEST(Cli, EvaluateMissingTruthIsConfigError) {
  const fs::path d = test::temp_dir("cli_eval_missing");
  io::save_ground_truth(d / "pred", 0, MaskRaster(4, 4, 1));
  fs::create_directories(d / "truth");
  EXPECT_EQ(smearlab("evaluate " + q(d / "pred" / "gt") + " " + q(d / "truth")).code, 2);
}

TEST(Cli, BaselinesWriteScoreRasters) {
  const fs::path d = dataset();
  for (const char* method : {"median", "statistical"}) {
    const CliRun r = smearlab(std::string("baseline ") + q(d) + " --method " + method);
    ASSERT_EQ(r.code, 0) << r.out;
    const auto ids = io::list_frame_ids(d);
    const auto raster = io::read_png16(d / "scores" / method / (io::frame_stem(ids.front()) + ".png"));
    EXPECT_EQ(raster.width(), 320);
    const CliRun ev = smearlab("evaluate " + q(d / "scores" / method) + " " + q(d));
    EXPECT_EQ(ev.code, 0) << ev.out;
  }
  EXPECT_EQ(smearlab("baseline " + q(d) + " --method mean").code, 2);
}

TEST(Cli, SweepsWriteTables) {
  const fs::path d = dataset();
  ASSERT_EQ(smearlab("annotate " + q(d) + " --sweep-window --out sweep").code, 0);
  const auto j = io::read_json(d / "sweep" / "sweep_window.json");
  ASSERT_TRUE(j.is_array());
  EXPECT_EQ(j.size(), 4u);
}

TEST(Cli, FuseUnposedIsGeometryError) {
  const fs::path d = test::temp_dir("cli_fuse_unposed");
  ASSERT_EQ(smearlab("simulate " + q(d) + " --frames 2 --no-poses").code, 0);
  EXPECT_EQ(smearlab("fuse " + q(d) + " " + q(d / "c.ply")).code, 3);
}
