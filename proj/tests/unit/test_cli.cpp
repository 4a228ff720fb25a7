#include "hitspace/commands.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace hitspace;
namespace fs = std::filesystem;

namespace {

const char* const kSmallConfig = R"({
  "seed": 3,
  "synthhit": {"n_records": 40},
  "hitformer": {"layers": 1, "heads": 2, "width": 16, "epochs": 2, "batch_size": 16},
  "recovery": {"n_eval": 8},
  "match": {"players": 12, "rallies": 120},
  "hitflow": {"hidden": 16, "blocks": 1, "time_features": 4, "film_hidden": 8, "epochs": 4, "batch_size": 32},
  "skillnet": {"epochs": 40},
  "probe": {"resamples": 10}
})";

std::string work_dir(const std::string& name) {
  const fs::path p = fs::path(HITSPACE_TEST_WORK_DIR) / "cli" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string write(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& args, const std::string& log) {
  const std::string cmd = std::string(HITSPACE_CLI_PATH) + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Data lines of a CSV with the stamp comment lines dropped.
std::vector<std::string> csv_rows(const std::string& path) {
  std::vector<std::string> rows;
  std::istringstream in(slurp(path));
  for (std::string line; std::getline(in, line);)
    if (!line.empty() && line[0] != '#') rows.push_back(line);
  return rows;
}

// One shared run directory with a small match dataset and trained HitFlow.
struct MatchRun {
  std::string dir, config;
  MatchRun() {
    dir = work_dir("match");
    config = write(dir + "/config.json", kSmallConfig);
    const std::string c = " --config " + config + " --out " + dir;
    if (run("synthhit --kind match" + c, dir + "/synth.log") != 0) throw std::runtime_error("synthhit failed");
    if (run("train --kind hitflow --data " + dir + "/rallies.ndjson --players " + dir + "/players.json" + c,
            dir + "/train.log") != 0)
      throw std::runtime_error("train failed");
    if (run("export-embeddings --model " + dir + "/hitflow.ckpt" + c, dir + "/export.log") != 0)
      throw std::runtime_error("export failed");
  }
};

const MatchRun& match_run() {
  static const MatchRun r;
  return r;
}

}  // namespace

TEST(Cli, UnknownConfigFieldIsConfigError) {
  const std::string dir = work_dir("bad_config");
  const std::string cfg = write(dir + "/c.json", R"({"hitformer": {"layers": 2, "lyers": 3}})");
  EXPECT_EQ(run("synthhit --n 5 --config " + cfg + " --out " + dir, dir + "/log"), 2);
  EXPECT_NE(slurp(dir + "/log").find("hitformer.lyers"), std::string::npos);
}

TEST(Cli, ConfigFromEnvironment) {
  const std::string dir = work_dir("env_config");
  const std::string cfg = write(dir + "/c.json", R"({"nonsense": 1})");
  ::setenv(kConfigEnvVar, cfg.c_str(), 1);
  const int rc = run("synthhit --n 5 --out " + dir, dir + "/log");
  ::unsetenv(kConfigEnvVar);
  EXPECT_EQ(rc, 2);
}

TEST(Cli, UsageErrorsAndMissingInputs) {
  const std::string dir = work_dir("usage");
  EXPECT_EQ(run("", dir + "/log"), 2);
  EXPECT_EQ(run("frobnicate", dir + "/log"), 2);
  EXPECT_EQ(run("train --kind hitformer --data " + dir + "/missing.ndjson --out " + dir, dir + "/log"), 3);
}

TEST(Cli, SynthHitReproducibleWithManifest) {
  const std::string a = work_dir("synth_a"), b = work_dir("synth_b");
  for (const auto& d : {a, b}) {
    const std::string cfg = write(d + "/c.json", kSmallConfig);
    ASSERT_EQ(run("synthhit --kind shots --config " + cfg + " --out " + d, d + "/log"), 0) << slurp(d + "/log");
  }
  EXPECT_EQ(slurp(a + "/synthhit.ndjson"), slurp(b + "/synthhit.ndjson"));
  EXPECT_EQ(slurp(a + "/synthhit_stats.json"), slurp(b + "/synthhit_stats.json"));
  int manifests = 0;
  for (const auto& e : fs::directory_iterator(a))
    if (e.path().filename().string().rfind("manifest.", 0) == 0) {
      ++manifests;
      const Json m = Json::parse(slurp(e.path().string()));
      for (const auto& art : m.at("artifacts"))
        EXPECT_EQ(art.at("checksum_fnv1a64"), checksum_file(a + "/" + art.at("path").get<std::string>()));
      EXPECT_EQ(slurp(e.path().string()), slurp((fs::path(b) / e.path().filename()).string()));
    }
  EXPECT_EQ(manifests, 1);
  std::vector<Json> lines;
  Json header;
  lines = read_ndjson(a + "/synthhit.ndjson", &header);
  EXPECT_EQ(lines.size(), 40u);
  EXPECT_EQ(header.at("seed"), 3);
}

TEST(Cli, SimulateWritesTrajectoryAndEvents) {
  const std::string dir = work_dir("simulate");
  ASSERT_EQ(run("simulate --hit=-1.6,0,0.25,9,0,1.2,0,60,0 --out " + dir, dir + "/log"), 0) << slurp(dir + "/log");
  const auto traj = csv_rows(dir + "/trajectory.csv");
  ASSERT_GT(traj.size(), 100u);
  EXPECT_EQ(traj.front().rfind("t", 0), 0u);
  const std::string events = slurp(dir + "/events.csv");
  EXPECT_NE(events.find("table_bounce"), std::string::npos);
  const Camera cam = camera_from_text(slurp(dir + "/camera_side.txt"));
  EXPECT_EQ(cam.name, "side");
  const Observation2D obs = observation_from_csv(slurp(dir + "/observation_side.csv"));
  // At most one second at 30 fps; shorter if the ball stops first.
  EXPECT_GT(obs.frames.size(), 10u);
  EXPECT_LE(obs.frames.size(), 31u);
}

TEST(Io, ObservationAndCameraTextRoundTrip) {
  Camera cam{"oblique", CameraIntrinsics{}, CameraPose::look_at(Vec3(-4.2, -4.2, 1.9), Vec3(0.2, 0, 0))};
  const Camera back = camera_from_text(camera_text(cam));
  EXPECT_EQ(back.pose.rotation, cam.pose.rotation);
  EXPECT_EQ(back.pose.translation, cam.pose.translation);
  EXPECT_EQ(back.intrinsics.fx, cam.intrinsics.fx);
  Observation2D obs;
  obs.camera_id = 2;
  obs.frames = {{0.0, Pixel(1.0 / 3.0, 700.25), true}, {1.0 / 30.0, Pixel(-5, 1e-7), false}};
  const Observation2D o2 = observation_from_csv(observation_csv(obs, ArtifactStamp{1, 2, "t"}));
  ASSERT_EQ(o2.frames.size(), 2u);
  EXPECT_EQ(o2.camera_id, 2);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(o2.frames[i].t_s, obs.frames[i].t_s);
    EXPECT_EQ(o2.frames[i].pixel, obs.frames[i].pixel);
    EXPECT_EQ(o2.frames[i].visible, obs.frames[i].visible);
  }
  EXPECT_THROW(observation_from_csv("t_s,u,v,visible\n0,1,2,7\n"), Error);
  EXPECT_THROW(camera_from_text("fx 1\n"), Error);
}

TEST(Cli, HitFormerTrainRecoverAndReload) {
  const std::string dir = work_dir("hitformer");
  const std::string cfg = write(dir + "/c.json", kSmallConfig);
  const std::string c = " --config " + cfg + " --out " + dir;
  ASSERT_EQ(run("synthhit" + c, dir + "/l1"), 0) << slurp(dir + "/l1");
  ASSERT_EQ(run("train --kind hitformer --data " + dir + "/synthhit.ndjson" + c, dir + "/l2"), 0) << slurp(dir + "/l2");
  EXPECT_EQ(csv_rows(dir + "/loss_hitformer.csv").size(), 3u);  // header + 2 epochs
  ASSERT_EQ(run("recover --data " + dir + "/synthhit.ndjson --model " + dir + "/hitformer.ckpt --n 6" + c, dir + "/l3"), 0)
      << slurp(dir + "/l3");
  const auto report = csv_rows(dir + "/recovery_report.csv");
  ASSERT_FALSE(report.empty());
  for (const char* col : {"side", "oblique", "back", "all"}) EXPECT_NE(report.front().find(col), std::string::npos);
  EXPECT_EQ(read_ndjson(dir + "/recovery.ndjson").size(), 6u);

  // A reloaded checkpoint gives the same evaluation loss as a second reload
  // after a save round trip.
  const ExperimentConfig ec = load_config(cfg);
  const auto records = load_hit_records(dir + "/synthhit.ndjson");
  HitFormerModel a = load_hitformer_checkpoint(dir + "/hitformer.ckpt", ec.hitformer);
  save_hitformer_checkpoint(dir + "/copy.ckpt", a, nullptr, 2, stamp_for(ec, "copy"));
  HitFormerModel b = load_hitformer_checkpoint(dir + "/copy.ckpt", ec.hitformer);
  std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5, 6, 7};
  const double la = hitformer_loss(a, make_hitformer_batch(a, records, idx, 1, 0), false);
  const double lb = hitformer_loss(b, make_hitformer_batch(b, records, idx, 1, 0), false);
  EXPECT_NEAR(la, lb, 1e-9);
}

TEST(Cli, KillAndResumeMatchesUninterrupted) {
  const MatchRun& m = match_run();
  const std::string a = work_dir("resume_a"), b = work_dir("resume_b");
  const std::string data = " --data " + m.dir + "/rallies.ndjson --players " + m.dir + "/players.json --config " + m.config;
  ASSERT_EQ(run("train --kind hitflow --epochs 4 --stop-after 2 --out " + a + data, a + "/l1"), 0);
  EXPECT_FALSE(fs::exists(a + "/loss_hitflow.csv"));
  ASSERT_TRUE(fs::exists(a + "/hitflow.ckpt"));
  ASSERT_EQ(run("train --kind hitflow --epochs 4 --resume --out " + a + data, a + "/l2"), 0) << slurp(a + "/l2");
  ASSERT_EQ(run("train --kind hitflow --epochs 4 --out " + b + data, b + "/l1"), 0);
  EXPECT_EQ(slurp(a + "/hitflow.ckpt"), slurp(b + "/hitflow.ckpt"));
  EXPECT_EQ(slurp(a + "/loss_hitflow.csv"), slurp(b + "/loss_hitflow.csv"));
  // Resuming under a different seed is refused.
  EXPECT_EQ(run("train --kind hitflow --epochs 4 --resume --seed 99 --out " + a + data, a + "/l3"), 2);
}

TEST(Cli, ExportEmbeddingsShape) {
  const MatchRun& m = match_run();
  const Eigen::MatrixXd e = load_embeddings_csv(m.dir + "/embeddings.csv");
  EXPECT_EQ(e.rows(), 12);
  EXPECT_EQ(e.cols(), 32);
  const auto rows = csv_rows(m.dir + "/embeddings.csv");
  EXPECT_EQ(rows.front().rfind("player_id,e0,", 0), 0u);
}

TEST(Cli, SampleWritesRequestedCount) {
  const MatchRun& m = match_run();
  const std::string dir = work_dir("sample");
  ASSERT_EQ(run("sample --model " + m.dir + "/hitflow.ckpt --data " + m.dir + "/rallies.ndjson --n 7 --config " +
                    m.config + " --out " + dir,
                dir + "/log"),
            0)
      << slurp(dir + "/log");
  EXPECT_EQ(csv_rows(dir + "/samples.csv").size(), 8u);
}

TEST(Cli, RankReports) {
  const MatchRun& m = match_run();
  const std::string dir = work_dir("rank");
  const std::string common = " --embeddings " + m.dir + "/embeddings.csv --players " + m.dir + "/players.json --config " +
                             m.config + " --out " + dir;
  ASSERT_EQ(run("rank --protocol known" + common, dir + "/l1"), 0) << slurp(dir + "/l1");
  const Json k = Json::parse(slurp(dir + "/rank_known.json"));
  for (const char* f : {"spearman_rho", "p_value", "predicted_ranks", "true_ranks", "degenerate_ties"})
    EXPECT_TRUE(k.contains(f)) << f;
  EXPECT_EQ(k.at("predicted_ranks").size(), 12u);
  ASSERT_EQ(run("rank --protocol pairs" + common, dir + "/l2"), 0) << slurp(dir + "/l2");
  const Json p = Json::parse(slurp(dir + "/rank_pairs.json"));
  int total = 0;
  for (const auto& g : p.at("by_gap")) total += g.at("total").get<int>();
  EXPECT_EQ(total, 66);
  EXPECT_TRUE(p.contains("accuracy_gap_le_threshold"));
}

TEST(Cli, ProbeSweep) {
  const MatchRun& m = match_run();
  const std::string dir = work_dir("probe");
  ASSERT_EQ(run("probe --attribute handedness --attribute dummy --embeddings " + m.dir + "/embeddings.csv --players " +
                    m.dir + "/players.json --config " + m.config + " --out " + dir,
                dir + "/log"),
            0)
      << slurp(dir + "/log");
  const auto rows = csv_rows(dir + "/probe.csv");
  ASSERT_EQ(rows.front(), "attribute,n_labeled,mcc");
  // Label counts 6..11 for 12 players, per attribute.
  EXPECT_EQ(rows.size(), 1u + 2u * 6u);
  EXPECT_EQ(rows[1].rfind("handedness,6,", 0), 0u);
}

TEST(Cli, ReportSummarisesRun) {
  const MatchRun& m = match_run();
  const std::string dir = work_dir("report");
  ASSERT_EQ(run("report --dir " + m.dir + " --out " + dir, dir + "/log"), 0) << slurp(dir + "/log");
  EXPECT_NE(slurp(dir + "/report.md").find("hitflow"), std::string::npos);
}
