#pragma once

// Umbrella header for the PPG knowledge-distillation toolkit.

#include "ppgkd/configfile.hpp"
#include "ppgkd/datagen.hpp"
#include "ppgkd/evalbench.hpp"
#include "ppgkd/losses.hpp"
#include "ppgkd/model.hpp"
#include "ppgkd/plot.hpp"
#include "ppgkd/report.hpp"
#include "ppgkd/rng.hpp"
#include "ppgkd/tensor.hpp"
#include "ppgkd/trainer.hpp"
