// Benchmarks the serial reference kernels against the OpenMP path on a
// realistic gradient workload and verifies the two produce bit-identical
// results (the parallel path is only a scheduling change, never a numeric
// one).
#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "manno/common.hpp"
#include "manno/models.hpp"
#include "manno/parallel.hpp"
#include "manno/synthetic.hpp"

using namespace manno;

namespace {

struct Workload {
  EncoderConfig enc;
  ParamLayout layout;
  std::vector<double> params;
  std::vector<TrainItem> items;
  std::vector<const TrainItem*> batch;
};

Workload build(std::size_t instances, std::uint64_t seed) {
  Workload w;
  static AnnotationMatrix matrix;  // items keep pointers into the matrix
  matrix = generate_synthetic(benchmark_config(seed, instances)).matrix;

  std::vector<std::size_t> all(matrix.n_instances());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  static Vocabulary vocab;
  vocab = build_vocabulary(matrix, all);

  w.enc.vocab_size = vocab.size();
  w.enc.embed_dim = 32;
  w.enc.hidden_dim = 64;
  w.enc.repr_dim = 64;
  w.enc.dropout = 0.1;
  w.layout = make_layout(TargetKind::PerAnnotatorSoftmax, w.enc,
                         matrix.n_annotators());
  w.params = init_params(w.layout, derive_seed(seed, "init"));
  w.items = make_train_items(matrix, all, vocab,
                             TargetKind::PerAnnotatorSoftmax);
  for (const auto& it : w.items) w.batch.push_back(&it);
  return w;
}

struct RunStats {
  double loss = 0.0;
  std::vector<double> grad;
  double best_seconds = 0.0;
  double mean_seconds = 0.0;
};

RunStats run(const Workload& w, Exec ex, int reps, std::uint64_t key) {
  using clk = std::chrono::steady_clock;
  RunStats out;
  out.best_seconds = 1e300;
  for (int r = 0; r < reps; ++r) {
    std::vector<double> grad(w.layout.total, 0.0);
    const auto t0 = clk::now();
    const double loss = batch_loss_grad(TargetKind::PerAnnotatorSoftmax,
                                        w.enc, w.layout, w.params, w.batch,
                                        key, grad, ex);
    const double s = std::chrono::duration<double>(clk::now() - t0).count();
    out.best_seconds = std::min(out.best_seconds, s);
    out.mean_seconds += s / reps;
    out.loss = loss;
    out.grad = std::move(grad);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial-vs-OpenMP kernel benchmark (full-batch gradient)"};
  std::size_t instances = 1200;
  std::uint64_t seed = 1;
  int reps = 5;
  int threads = 0;
  app.add_option("--instances", instances, "corpus size (default 1200)");
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--reps", reps, "repetitions per mode (default 5)");
  app.add_option("--threads", threads, "OpenMP thread cap (0 = runtime)");
  CLI11_PARSE(app, argc, argv);

  set_exec_threads(threads);
  Workload w = build(instances, seed);
  std::printf("workload: %zu instances, %zu parameters, batch of %zu\n",
              instances, w.layout.total, w.batch.size());

  const std::uint64_t key = derive_seed(seed, "bench");
  const RunStats serial = run(w, Exec::Serial, reps, key);
  const RunStats openmp = run(w, Exec::OpenMP, reps, key);

  const bool same_loss =
      std::memcmp(&serial.loss, &openmp.loss, sizeof(double)) == 0;
  const bool same_grad =
      serial.grad.size() == openmp.grad.size() &&
      std::memcmp(serial.grad.data(), openmp.grad.data(),
                  serial.grad.size() * sizeof(double)) == 0;

  std::printf("%-8s %6s %12s %12s\n", "mode", "reps", "best s", "mean s");
  std::printf("%-8s %6d %12.4f %12.4f\n", "serial", reps, serial.best_seconds,
              serial.mean_seconds);
  std::printf("%-8s %6d %12.4f %12.4f\n", "openmp", reps, openmp.best_seconds,
              openmp.mean_seconds);
  std::printf("speedup (best serial / best openmp): %.2fx\n",
              serial.best_seconds / openmp.best_seconds);
  std::printf("results bit-identical: %s\n",
              same_loss && same_grad ? "yes" : "NO");
  return same_loss && same_grad ? 0 : 1;
}
