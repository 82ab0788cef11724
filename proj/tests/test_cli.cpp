// SPDX-License-Identifier: Apache-2.0
// Drives the command-line binary and checks exit codes and reports.
#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(PANPP_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch() {
  const fs::path p = fs::temp_directory_path() / "panpp_cli_test";
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const char* kTiny = "--backbone-channels 8,8,8,8 --enhanced-channels 8 --rec-dim 16 --rec-heads 2 --rec-hidden 16";

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(run("").code == 1);
  CHECK(run("no-such-command").code == 1);
  CHECK(run("infer --image").code == 1);
  CHECK(run("fixture --kind square --out /tmp/x").code == 1);
  CHECK(run("--help").code == 0);
}

TEST_CASE("fixture, postprocess and eval round trip") {
  const fs::path d = scratch();
  REQUIRE(run("fixture --kind adjacent --out " + (d / "adj").string()).code == 0);
  for (const char* f : {"image.ptm", "annotations.txt", "p_tex.ptm", "p_ker.ptm", "emb.ptm"}) {
    CHECK(fs::exists(d / "adj" / f));
  }
  const std::string maps = "--p-tex " + (d / "adj/p_tex.ptm").string() + " --p-ker " + (d / "adj/p_ker.ptm").string() +
                           " --emb " + (d / "adj/emb.ptm").string();
  const Run pp = run("postprocess " + maps + " --out " + (d / "pa").string());
  CHECK(pp.code == 0);
  CHECK(pp.out.find("instances=2") != std::string::npos);
  CHECK(fs::exists(d / "pa/result.txt"));

  const Run bench = run("postprocess " + maps + " --bench 5");
  CHECK(bench.code == 0);
  CHECK(bench.out.find("pa.p50_ms=") != std::string::npos);
  CHECK(run("postprocess " + maps).code == 1);
  CHECK(run("postprocess --p-tex " + (d / "missing.ptm").string() + " --p-ker a --emb b --out c").code == 2);

  // The detections carry empty transcriptions, so only detection metrics are perfect.
  fs::create_directories(d / "gt");
  fs::create_directories(d / "pred");
  fs::copy_file(d / "adj/annotations.txt", d / "gt/img.txt");
  fs::copy_file(d / "pa/result.txt", d / "pred/img.txt");
  const Run ev = run("eval --gt " + (d / "gt").string() + " --pred " + (d / "pred").string() + " --csv " +
                     (d / "eval.csv").string());
  CHECK(ev.code == 0);
  CHECK(ev.out.find("det_f=1") != std::string::npos);
  CHECK(ev.out.find("e2e_f=0") != std::string::npos);
  CHECK(fs::exists(d / "eval.csv"));
  fs::remove_all(d);
}

TEST_CASE("gen-labels, ppm2ptm, infer and bench") {
  const fs::path d = scratch();
  {
    std::ofstream(d / "ann.txt") << "8,8,120,8,120,40,8,40\tcat\n";
    std::ofstream(d / "bad.txt") << "8,8,120\tcat\n";
  }
  CHECK(run("gen-labels --annotations " + (d / "ann.txt").string() + " --height 48 --width 128 --out " +
            (d / "labels").string()).code == 0);
  CHECK(fs::exists(d / "labels/g_ker.ptm"));
  CHECK(run("gen-labels --annotations " + (d / "bad.txt").string() + " --height 48 --width 128 --out " +
            (d / "labels").string()).code == 2);

  {
    std::ofstream f(d / "img.ppm", std::ios::binary);
    f << "P6\n64 64\n255\n";
    for (int i = 0; i < 64 * 64 * 3; ++i) f.put(static_cast<char>((i * 37) % 256));
  }
  REQUIRE(run("ppm2ptm " + (d / "img.ppm").string() + " " + (d / "img.ptm").string()).code == 0);
  const Run inf = run("infer --image " + (d / "img.ptm").string() + " --out " + (d / "out").string() + " " + kTiny +
                      " --max-steps 4");
  CHECK(inf.code == 0);
  CHECK(inf.out.find("instances=") != std::string::npos);
  CHECK(fs::exists(d / "out/p_tex.ptm"));

  // Config file values apply unless a flag overrides them.
  {
    std::ofstream(d / "run.cfg") << "[model]\nenhanced_channels = 8\nrec_dim = 16\nrec_heads = 2\nrec_hidden = 16\n"
                                    "backbone_channels = 8,8,8,8\n[run]\nreps = 1\n";
  }
  const Run be = run("--config " + (d / "run.cfg").string() + " bench --image " + (d / "img.ptm").string());
  CHECK(be.code == 0);
  CHECK(be.out.find("repetitions=1") != std::string::npos);
  CHECK(be.out.find("stage.fpem.p99_ms=") != std::string::npos);
  const Run be2 = run("--config " + (d / "run.cfg").string() + " bench --reps 2 --det-only --image " +
                      (d / "img.ptm").string());
  CHECK(be2.out.find("repetitions=2") != std::string::npos);
  CHECK(run("--config " + (d / "missing.cfg").string() + " grad-check").code == 1);
  fs::remove_all(d);
}

TEST_CASE("grad-check passes") {
  const Run r = run("grad-check --seed 7");
  CHECK(r.code == 0);
  CHECK(r.out.find("rec") != std::string::npos);
}
