// Writes the synthetic NER benchmark: MNER-format splits, a caption file and
// the mock LLM script that answers every prompt the pipeline sends.
#include <iostream>

#include <CLI11.hpp>

#include "cotpd/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic NER benchmark and its mock LLM script.", "cotpd-synth"};
  std::string out = "data/synthetic";
  cotpd::synthetic::Options opt;
  std::size_t target = 200;
  app.add_option("--out", out, "Output directory")->capture_default_str();
  app.add_option("--samples", opt.samples, "Samples in the source domain")->capture_default_str();
  app.add_option("--seed", opt.seed, "Generator seed")->capture_default_str();
  app.add_option("--cue-reliability", opt.cue_reliability, "Probability that the context word matches the type")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app.add_option("--target-samples", target, "Samples in the style-shifted target domain (0: none)")
      ->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    cotpd::synthetic::write_benchmark(out, opt, target);
    std::cout << "wrote " << opt.samples << " source and " << target << " target samples to " << out << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
