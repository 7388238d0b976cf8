#pragma once

#include "piwf/csi.hpp"
#include "piwf/dataset.hpp"
#include "piwf/env_adapt.hpp"
#include "piwf/errors.hpp"
#include "piwf/loss.hpp"
#include "piwf/metrics.hpp"
#include "piwf/model.hpp"
#include "piwf/plot.hpp"
#include "piwf/pose_decode.hpp"
#include "piwf/rng.hpp"
#include "piwf/skeleton.hpp"
#include "piwf/synth_world.hpp"
#include "piwf/target_encode.hpp"
#include "piwf/tensor.hpp"
#include "piwf/training.hpp"
