// hitspace: dataset generation, training, recovery and evaluation driver.

#include "hitspace/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

void add_common(CLI::App* app, hitspace::CommonOptions& c, std::uint64_t& seed, bool& seed_set) {
  app->add_option("--config", c.config_path, "Experiment config (JSON); defaults to $HITSPACE_CONFIG");
  app->add_option("--seed", seed, "Global seed, overrides the config")->each([&](const std::string&) { seed_set = true; });
  app->add_option("--out", c.out, "Output directory")->capture_default_str();
  app->add_option("--jobs", c.jobs, "Worker threads")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace hitspace;
  CLI::App app{"Table tennis hit-space toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  CommonOptions common;
  std::uint64_t seed = 0;
  bool seed_set = false;

  SynthHitOptions synth;
  auto* c_synth = app.add_subcommand("synthhit", "Generate a synthetic shot or match dataset");
  add_common(c_synth, common, seed, seed_set);
  c_synth->add_option("--kind", synth.kind, "shots or match")->check(CLI::IsMember({"shots", "match"}));
  c_synth->add_option("--n", synth.n_records, "Number of shot records");
  c_synth->add_option("--players", synth.players, "Number of player archetypes");
  c_synth->add_option("--rallies", synth.rallies, "Number of rallies");

  SimulateOptions sim;
  auto* c_sim = app.add_subcommand("simulate", "Simulate one hit and write its trajectory");
  add_common(c_sim, common, seed, seed_set);
  c_sim->add_option("--hit", sim.hit, "x y z vx vy vz wx wy wz")->expected(9)->delimiter(',');
  c_sim->add_option("--shot-type", sim.shot_type, "Sample a hit of this type instead");

  RecoverOptions rec;
  auto* c_rec = app.add_subcommand("recover", "Recover hit vectors from 2D observations");
  add_common(c_rec, common, seed, seed_set);
  c_rec->add_option("--data", rec.data, "synthhit.ndjson")->required();
  c_rec->add_option("--model", rec.model, "hitformer.ckpt")->required();
  c_rec->add_option("--n", rec.n, "Evaluate the first n records");
  bool no_noiseless = false;
  c_rec->add_flag("--no-noiseless", no_noiseless, "Skip the clean re-projection pass");

  TrainOptions train;
  auto* c_train = app.add_subcommand("train", "Train a model, resumable from its checkpoint");
  add_common(c_train, common, seed, seed_set);
  c_train->add_option("--kind", train.kind, "hitformer, hitflow or skillnet")
      ->required()
      ->check(CLI::IsMember({"hitformer", "hitflow", "skillnet"}));
  c_train->add_option("--data", train.data, "Training records (synthhit.ndjson or rallies.ndjson)");
  c_train->add_option("--players", train.players, "players.json");
  c_train->add_option("--embeddings", train.embeddings, "embeddings.csv (skillnet)");
  c_train->add_option("--epochs", train.epochs, "Override the configured epoch count");
  c_train->add_flag("--resume", train.resume, "Continue from the checkpoint in --out");
  c_train->add_option("--stop-after", train.stop_after, "Stop after this many epochs in this run");

  SampleOptions samp;
  auto* c_samp = app.add_subcommand("sample", "Sample response hits for one rally context");
  add_common(c_samp, common, seed, seed_set);
  c_samp->add_option("--model", samp.model, "hitflow.ckpt")->required();
  c_samp->add_option("--data", samp.data, "rallies.ndjson")->required();
  c_samp->add_option("--record", samp.record, "Context record index")->capture_default_str();
  c_samp->add_option("--player", samp.player, "Player id (defaults to the record's responder)");
  c_samp->add_option("--n", samp.n, "Number of samples");

  RankOptions rank;
  auto* c_rank = app.add_subcommand("rank", "Rank players from their embeddings");
  add_common(c_rank, common, seed, seed_set);
  c_rank->add_option("--embeddings", rank.embeddings, "embeddings.csv")->required();
  c_rank->add_option("--players", rank.players, "players.json")->required();
  c_rank->add_option("--protocol", rank.protocol, "known, pairs or probe")->check(CLI::IsMember({"known", "pairs", "probe"}));

  RankOptions probe;
  probe.protocol = "probe";
  auto* c_probe = app.add_subcommand("probe", "Linear attribute probe over a sweep of label counts");
  add_common(c_probe, common, seed, seed_set);
  c_probe->add_option("--embeddings", probe.embeddings, "embeddings.csv")->required();
  c_probe->add_option("--players", probe.players, "players.json")->required();
  c_probe->add_option("--attribute", probe.attributes, "handedness, sex_tag, dummy");

  std::string export_model;
  auto* c_exp = app.add_subcommand("export-embeddings", "Write the player embedding table as CSV");
  add_common(c_exp, common, seed, seed_set);
  c_exp->add_option("--model", export_model, "hitflow.ckpt")->required();

  std::string report_dir;
  auto* c_rep = app.add_subcommand("report", "Summarise the results found in a run directory");
  add_common(c_rep, common, seed, seed_set);
  c_rep->add_option("--dir", report_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (seed_set) common.seed = seed;

  try {
    if (*c_synth) cmd_synthhit(common, synth);
    else if (*c_sim) cmd_simulate(common, sim);
    else if (*c_rec) {
      rec.noiseless = !no_noiseless;
      cmd_recover(common, rec);
    } else if (*c_train) {
      if (train.kind != "skillnet" && train.data.empty()) throw Error(ErrorKind::Config, "train: --data is required");
      if (train.kind == "skillnet" && (train.embeddings.empty() || train.players.empty()))
        throw Error(ErrorKind::Config, "train skillnet: --embeddings and --players are required");
      cmd_train(common, train);
    } else if (*c_samp) cmd_sample(common, samp);
    else if (*c_rank) cmd_rank(common, rank);
    else if (*c_probe) cmd_rank(common, probe);
    else if (*c_exp) cmd_export_embeddings(common, export_model);
    else if (*c_rep) cmd_report(common, report_dir);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
