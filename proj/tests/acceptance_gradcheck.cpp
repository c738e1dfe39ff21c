// Criterion 1 in the 64-bit build. Prints one line; exit 0 on pass.
#include <chrono>
#include <cstdio>

#include "micro.hpp"
#include "support.hpp"

int main() {
  using namespace glm;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    CrossModalModel model(test::micro_config(), 5);
    const MaskedBatch batch = test::micro_batch(model.config());
    auto f = [&](Graph& g) { return test::micro_loss(model, g, batch); };
    const auto r = test::check_gradients(f, model.parameters(), 1e-5);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = sizeof(Real) == 8 && r.max_rel_error < 1e-3 && secs < 30;
    std::printf("%s criterion 1 gradient fidelity: %zu elements, max rel error %.3g at %s, %.1fs\n",
                ok ? "PASS" : "FAIL", r.checked, r.max_rel_error, r.worst.c_str(), secs);
    return ok ? 0 : 1;
  } catch (const std::exception& e) {
    std::printf("FAIL criterion 1 gradient fidelity: %s\n", e.what());
    return 1;
  }
}
