#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path log = fs::temp_directory_path() / ("msb_cli_out_" + std::to_string(counter++));
  const std::string cmd = std::string(MSB_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(log);
  std::stringstream buf;
  buf << in.rdbuf();
  result.output = buf.str();
  fs::remove(log);
  return result;
}

// one shared workspace with a small two-label corpus
struct Workspace {
  fs::path dir;
  fs::path manifest;
  fs::path config;

  Workspace() {
    dir = fs::temp_directory_path() / "msb_cli_ws";
    fs::remove_all(dir);
    fs::create_directories(dir);
    manifest = dir / "manifest.jsonl";
    std::ofstream m(manifest);
    const char* words[] = {"gradient", "attention", "corpus",  "figure", "table",
                           "theorem",  "baseline",  "dataset", "model",  "layer"};
    auto write_doc = [&](int i, const char* split) {
      json j;
      j["doc_id"] = std::string(split) + "-" + std::to_string(i);
      j["title"] = "Paper " + std::string(split) + " " + std::to_string(i);
      std::string text;
      for (int w = 0; w < 24; ++w) {
        text += words[(i * 7 + w * 3) % 10];
        text += ' ';
      }
      j["text"] = text;
      j["split"] = split;
      j["accepted"] = i % 2 == 0;
      j["citations"] = (i * 13) % 40;
      m << j.dump() << "\n";
    };
    for (int i = 0; i < 12; ++i) write_doc(i, "train");
    for (int i = 0; i < 4; ++i) write_doc(i, "validation");
    for (int i = 0; i < 4; ++i) write_doc(i, "test");
    m.close();

    config = dir / "config.json";
    json cfg;
    cfg["dataset"]["manifest"] = manifest.string();
    cfg["dataset"]["task"] = "accept_reject";
    cfg["encoder"]["name"] = "mock";
    cfg["encoder"]["dimension"] = 8;
    cfg["encoder"]["sequence_length"] = 6;
    cfg["encoder"]["overlap"] = 2;
    cfg["model"]["kind"] = "schubert";
    cfg["model"]["gru_hidden"] = 8;
    cfg["model"]["dropout_text"] = 0.0;
    cfg["optimizer"]["base_lr"] = 0.01;
    cfg["optimizer"]["epochs"] = 3;
    cfg["optimizer"]["batch_size"] = 4;
    cfg["seed"] = 3;
    cfg["repeats"] = 2;
    std::ofstream(config) << cfg.dump(2);
  }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("no arguments prints usage and fails") {
  CliResult r = run_cli("");
  CHECK(r.exit_code != 0);
}

TEST_CASE("stats reports per-split counts") {
  CliResult r = run_cli("stats --config " + ws().config.string());
  CHECK(r.exit_code == 0);
  json out = json::parse(r.output);
  CHECK(out.at("train").at("count") == 12);
  CHECK(out.at("validation").at("count") == 4);
  CHECK(out.at("test").at("count") == 4);
  CHECK(out.at("train").contains("accept_fraction"));
  CHECK(out.at("train").contains("citation_score_mean"));
}

TEST_CASE("schema violations exit with code 2") {
  CliResult bad_model = run_cli("stats --config " + ws().config.string() +
                                " --set model.kind=resnet");
  CHECK(bad_model.exit_code == 2);
  CliResult bad_override = run_cli("stats --config " + ws().config.string() + " --set broken");
  CHECK(bad_override.exit_code == 2);
  CliResult bad_epochs = run_cli("stats --config " + ws().config.string() +
                                 " --set optimizer.epochs=0");
  CHECK(bad_epochs.exit_code == 2);
}

TEST_CASE("missing inputs exit with code 3") {
  CliResult r = run_cli("stats --config /nonexistent/config.json");
  CHECK(r.exit_code == 3);
  CliResult missing_manifest = run_cli("stats --config " + ws().config.string() +
                                       " --set dataset.manifest=/nonexistent/m.jsonl");
  CHECK(missing_manifest.exit_code == 3);
}

TEST_CASE("embed writes a cache usable by train") {
  const fs::path cache_dir = ws().dir / "cache";
  CliResult r = run_cli("embed --config " + ws().config.string() + " --out " + cache_dir.string());
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(cache_dir / "cache.jsonl"));
}

TEST_CASE("train writes a complete run directory") {
  const fs::path run_dir = ws().dir / "run1";
  CliResult r = run_cli("train --config " + ws().config.string() + " --out " + run_dir.string());
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(run_dir / "config.json"));
  CHECK(fs::exists(run_dir / "run.json"));
  CHECK(fs::exists(run_dir / "trace.jsonl"));
  CHECK(fs::exists(run_dir / "best.ckpt"));
  CHECK(fs::exists(run_dir / "best.ckpt.json"));
  CHECK(fs::exists(run_dir / "report.json"));

  // trace: repeats x epochs lines of valid json
  std::ifstream trace(run_dir / "trace.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(trace, line)) {
    json j = json::parse(line);
    CHECK(j.contains("epoch"));
    CHECK(j.contains("train_loss"));
    CHECK(j.contains("val_ar_loss"));
    ++lines;
  }
  CHECK(lines == 2 * 3);

  std::ifstream rj(run_dir / "run.json");
  json run_record = json::parse(rj);
  CHECK(run_record.at("seed") == 3);
  CHECK(run_record.at("config_hash").get<std::string>().size() == 16);

  std::ifstream sc(run_dir / "best.ckpt.json");
  json sidecar = json::parse(sc);
  CHECK(sidecar.at("model_kind") == "schubert");
  CHECK(sidecar.at("encoder_name") == "mock");

  SUBCASE("report summarizes the run") {
    CliResult rep = run_cli("report --run " + run_dir.string());
    CHECK(rep.exit_code == 0);
    CHECK(rep.output.find("accept_reject") != std::string::npos);
    CHECK(rep.output.find("config_hash") != std::string::npos);
  }

  SUBCASE("evaluate consumes the checkpoint") {
    CliResult ev = run_cli("evaluate --config " + ws().config.string() + " --ckpt " +
                           (run_dir / "best.ckpt").string());
    REQUIRE(ev.exit_code == 0);
    json out = json::parse(ev.output);
    CHECK(out.at("n_test") == 4);
    CHECK(out.at("test").contains("ar_accuracy"));
  }
}

TEST_CASE("training runs are reproducible for a fixed seed") {
  const fs::path run_a = ws().dir / "run_a";
  const fs::path run_b = ws().dir / "run_b";
  REQUIRE(run_cli("train --config " + ws().config.string() + " --out " + run_a.string() +
                  " --repeats 1").exit_code == 0);
  REQUIRE(run_cli("train --config " + ws().config.string() + " --out " + run_b.string() +
                  " --repeats 1").exit_code == 0);
  std::ifstream a(run_a / "trace.jsonl"), b(run_b / "trace.jsonl");
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
}

TEST_CASE("divergent training exits with code 4") {
  CliResult r = run_cli("train --config " + ws().config.string() + " --out " +
                        (ws().dir / "run_div").string() +
                        " --repeats 1 --set optimizer.base_lr=1e38");
  CHECK(r.exit_code == 4);
}

TEST_CASE("baseline reports majority-class metrics") {
  CliResult r = run_cli("baseline --config " + ws().config.string());
  REQUIRE(r.exit_code == 0);
  json out = json::parse(r.output);
  CHECK(out.contains("majority_class"));
  CHECK(out.at("classification").contains("accuracy"));

  CliResult cit = run_cli("baseline --config " + ws().config.string() +
                          " --set dataset.task=citation");
  REQUIRE(cit.exit_code == 0);
  json cout_ = json::parse(cit.output);
  CHECK(cout_.contains("mean_citation_score"));
  CHECK(cout_.at("regression").contains("mae"));
}

TEST_CASE("filter-leakage removes overlapping test titles") {
  const fs::path titles = ws().dir / "titles.txt";
  std::ofstream(titles) << "Paper test 0\nPaper test 1\nPaper train 0\n";
  const fs::path out_dir = ws().dir / "leak";
  CliResult r = run_cli("filter-leakage --config " + ws().config.string() + " --titles " +
                        titles.string() + " --mode test_only --out " + out_dir.string());
  REQUIRE(r.exit_code == 0);
  json report = json::parse(r.output);
  CHECK(report.at("splits").at("test").at("overlapping") == 2);
  CHECK(report.at("splits").at("train").at("overlapping") == 1);
  CHECK(report.at("kept") == 20 - 2);  // only the test overlaps are removed
  CHECK(fs::exists(out_dir / "manifest.filtered.jsonl"));
  CHECK(fs::exists(out_dir / "leakage_report.json"));

  CliResult no_titles = run_cli("filter-leakage --config " + ws().config.string());
  CHECK(no_titles.exit_code == 2);
}

TEST_CASE("prep-vis builds page grids from page images") {
  // a second manifest whose documents carry page images
  const fs::path pages_dir = ws().dir / "pages";
  fs::create_directories(pages_dir);
  std::vector<std::string> paths;
  for (int p = 0; p < 3; ++p) {
    const fs::path png = pages_dir / ("p" + std::to_string(p) + ".png");
    cv::Mat page(440, 340, CV_8UC3, cv::Scalar(30 * p, 80, 190));
    cv::imwrite(png.string(), page);
    paths.push_back(png.string());
  }
  const fs::path vis_manifest = ws().dir / "vis_manifest.jsonl";
  {
    json j;
    j["doc_id"] = "visdoc";
    j["title"] = "Visual Doc";
    j["text"] = "unused words here";
    j["split"] = "train";
    j["accepted"] = true;
    j["page_paths"] = paths;
    std::ofstream(vis_manifest) << j.dump() << "\n";
  }
  const fs::path grids = ws().dir / "grids";
  CliResult r = run_cli("prep-vis --config " + ws().config.string() +
                        " --set dataset.manifest=" + vis_manifest.string() + " --out " +
                        grids.string());
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(grids / "visdoc.grid.png"));
  CHECK(fs::exists(grids / "visdoc.grid.json"));
  std::ifstream sc(grids / "visdoc.grid.json");
  json sidecar = json::parse(sc);
  CHECK(sidecar.at("pages_used") == 3);
  CHECK(sidecar.at("pages_truncated") == 0);
  CHECK(sidecar.at("grid") == "3x4");
}
