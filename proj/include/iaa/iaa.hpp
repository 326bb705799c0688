#pragma once

#include "iaa/augmentation.hpp"
#include "iaa/core.hpp"
#include "iaa/correction.hpp"
#include "iaa/correlation.hpp"
#include "iaa/encoder.hpp"
#include "iaa/error.hpp"
#include "iaa/evaluation.hpp"
#include "iaa/io.hpp"
#include "iaa/losses.hpp"
#include "iaa/optimizer.hpp"
#include "iaa/parallel.hpp"
#include "iaa/rng.hpp"
#include "iaa/sampler.hpp"
#include "iaa/serialization.hpp"
#include "iaa/stats.hpp"
#include "iaa/trainer.hpp"
#include "iaa/world.hpp"
