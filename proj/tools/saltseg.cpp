// Command-line entry point: prepare, synth, selftrain, predict, evaluate, mosaic.

#include <CLI11.hpp>
#include <iostream>

#include "saltseg/commands.hpp"

int main(int argc, char** argv) {
  using namespace saltseg;

  CLI::App app{"Salt-body segmentation with iterative self-training"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions global;
  global.argv.assign(argv, argv + argc);
  std::string config, device;
  std::uint64_t seed = 0;
  app.add_option("--config", config, "Experiment config (JSON)");
  app.add_option("--seed", seed, "Seed override");
  app.add_flag("--deterministic", global.deterministic, "Deterministic algorithms, single thread");
  app.add_option("--device", device, "Compute device (cpu)");
  app.add_flag("--resume", global.resume, "Reuse completed round directories");

  PrepareOptions prepare;
  std::string prepare_labels;
  auto* prep = app.add_subcommand("prepare", "Fold file and dataset manifest");
  prep->add_option("--data", prepare.data_dir, "Directory holding images/")->required();
  prep->add_option("--labels", prepare_labels, "Label CSV (id,rle_mask)");
  prep->add_option("--out", prepare.out_dir, "Output directory")->required();
  prep->add_option("--folds", prepare.n_folds, "Number of folds")->capture_default_str();
  prep->add_option("--image-size", prepare.image_size, "Expected image side")->capture_default_str();

  SynthOptions synth;
  auto* syn = app.add_subcommand("synth", "Generate a synthetic desk-scale dataset and config");
  syn->add_option("--out", synth.out_dir, "Output directory")->required();
  syn->add_option("--labeled", synth.labeled)->capture_default_str();
  syn->add_option("--unlabeled", synth.unlabeled)->capture_default_str();
  syn->add_option("--holdout", synth.holdout)->capture_default_str();
  syn->add_option("--image-size", synth.image_size)->capture_default_str();

  auto* train = app.add_subcommand("selftrain", "Run all self-training rounds");

  PredictOptions predict;
  std::string predict_input;
  auto* pred = app.add_subcommand("predict", "Ensemble prediction to a submission CSV");
  pred->add_option("--select", predict.selector, "Selector, e.g. 'rounds in {2,3}, folds=*'")->required();
  pred->add_option("--input", predict_input, "Directory holding images/ (default: holdout)");
  pred->add_option("--out", predict.out, "Submission CSV")->required();

  EvaluateOptions evaluate;
  std::string eval_predictions, eval_selector, eval_data, eval_report;
  auto* eval = app.add_subcommand("evaluate", "mAP of predictions against labels");
  eval->add_option("--predictions", eval_predictions, "Submission CSV");
  eval->add_option("--select", eval_selector, "Ensemble selector (needs --config)");
  eval->add_option("--labels", evaluate.labels, "Label CSV")->required();
  eval->add_option("--data", eval_data, "Directory holding images/ for --select");
  eval->add_option("--report", eval_report, "Per-image report CSV");
  eval->add_option("--image-size", evaluate.image_size)->capture_default_str();

  MosaicOptions mosaic;
  std::string mosaic_labels;
  auto* mos = app.add_subcommand("mosaic", "Tile patches with mask boundaries into one PNG");
  mos->add_option("--layout", mosaic.layout, "Layout file: one row per line, comma-separated ids")->required();
  mos->add_option("--data", mosaic.data_dir, "Directory holding images/")->required();
  mos->add_option("--labels", mosaic_labels, "Label CSV for boundaries");
  mos->add_option("--out", mosaic.out, "PNG output")->required();
  mos->add_option("--image-size", mosaic.image_size)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (!config.empty()) global.config = config;
  if (app.count("--seed")) global.seed = seed;
  if (!device.empty()) global.device = device;

  try {
    if (*prep) {
      if (!prepare_labels.empty()) prepare.labels = prepare_labels;
      cmd_prepare(prepare, global, std::cout);
    } else if (*syn) {
      cmd_synth(synth, global, std::cout);
    } else if (*train) {
      cmd_selftrain(global, std::cout);
    } else if (*pred) {
      if (!predict_input.empty()) predict.input_dir = predict_input;
      cmd_predict(predict, global, std::cout);
    } else if (*eval) {
      if (!eval_predictions.empty()) evaluate.predictions = eval_predictions;
      if (!eval_selector.empty()) evaluate.selector = eval_selector;
      if (!eval_data.empty()) evaluate.data_dir = eval_data;
      if (!eval_report.empty()) evaluate.report = eval_report;
      cmd_evaluate(evaluate, global, std::cout);
    } else if (*mos) {
      if (!mosaic_labels.empty()) mosaic.labels = mosaic_labels;
      cmd_mosaic(mosaic, global, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "saltseg: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 0;
}
