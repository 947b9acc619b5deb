// Desk-budget training checks, too slow for the unit suite.

#include "doctest.h"
#include "udfforge/config.hpp"
#include "udfforge/scene.hpp"
#include "udfforge/training.hpp"

#ifndef UDFFORGE_DESK_CONFIG
#error "UDFFORGE_DESK_CONFIG must name the desk config"
#endif

using namespace udf;

TEST_CASE("training on the clean plane drives loss_near below 1e-3") {
  const RunConfig desk = load_run_config(UDFFORGE_DESK_CONFIG);
  const SyntheticScene plane = gen_scene(SceneKind::Plane, 2000, 0.0, desk.seed);
  const TrainResult r = train(plane.cloud, desk.train);
  REQUIRE_FALSE(r.aborted);

  // Fresh samples from the final cloud, so the value is not one batch's noise.
  Rng rng(desk.seed + 1);
  std::vector<PlaneSample> samples;
  for (std::size_t i = 0; i < r.cloud.size(); ++i) {
    const Surfel& s = r.cloud.surfels[i];
    for (const auto& p : sample_offsets(s, i, sample_plane_roots(s, 5, rng), desk.train.sampler, rng)) {
      samples.push_back(p);
    }
  }
  const double l_near = loss_near(r.field, samples);
  MESSAGE("loss_near = " << l_near << ", last logged = " << r.log.back().l_near.value_or(-1.0));
  CHECK(l_near < 1e-3);
}
