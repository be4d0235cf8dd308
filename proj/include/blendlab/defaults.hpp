// Copyright (C) 2026 blendlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "blendlab/blend.hpp"
#include "blendlab/concepts.hpp"

namespace blendlab {

/// Two unit-covariance Gaussians at (-3, 0) and (3, 0).
inline std::vector<ConceptSpec> default_concepts()
{
    return {isotropic_concept("A", Vector{{-3.0, 0.0}}), isotropic_concept("B", Vector{{3.0, 0.0}})};
}

inline DenoiserRegistry default_registry() { return DenoiserRegistry(default_concepts()); }

/// T = 50, w = 3, 2000 chains, stages at 0.88 T and 0.12 T.
inline RunConfig default_run_config()
{
    RunConfig c;
    c.schedule = ScheduleParams{50, 1e-4, 0.08};
    c.stages = stage_config_from_fractions(0.88, 0.12, c.schedule.step_count);
    c.policy = BlendPolicy{};
    c.policy.guidance_w = 3.0;
    c.labels = {"A", "B"};
    c.dimension = 2;
    c.chain_count = 2000;
    c.master_seed = 42;
    return c;
}

} // namespace blendlab
