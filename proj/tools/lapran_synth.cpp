// Generates the procedural stand-in datasets as PNG directories, for use with
// data.kind = "directory" configs and for eyeballing the corpora.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "lapran/synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic dataset generator"};
  std::string kind = "digits", out = "synth_out";
  int count = 100, side = 64;
  std::uint64_t seed = 0;
  app.add_option("--kind", kind, "digits | textures");
  app.add_option("--out", out, "Output directory");
  app.add_option("--count", count, "Number of images");
  app.add_option("--side", side, "Image side in pixels");
  app.add_option("--seed", seed, "Generator seed");
  CLI11_PARSE(app, argc, argv);

  if (kind != "digits" && kind != "textures") {
    std::cerr << "config error: --kind must be digits or textures\n";
    return 2;
  }
  std::filesystem::create_directories(out);
  for (int i = 0; i < count; ++i) {
    auto img = kind == "digits" ? lapran::synth::digit_like(side, seed, i)
                                : lapran::synth::texture_like(side, seed, i);
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.png", i);
    lapran::save_png(img, std::filesystem::path(out) / name);
  }
  std::cout << "wrote " << count << " images to " << out << "\n";
  return 0;
}
