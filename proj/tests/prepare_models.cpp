#include <chrono>
#include <iostream>

#include "support/models.hpp"

int main() {
  try {
    const auto t0 = std::chrono::steady_clock::now();
    const auto m = models::ensure({}, true);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "desk models ready in " << m.dir << " (" << secs << " s)\n";
    std::cout << "DAE held-out loss " << m.dae_log.front().heldout_loss << " -> "
              << m.dae_log.back().heldout_loss << "\n";
    std::cout << "MAP held-out loss " << m.map_log.front().heldout_loss << " -> "
              << m.map_log.back().heldout_loss << "\n";
  } catch (const std::exception& e) {
    std::cerr << "prepare_models: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
