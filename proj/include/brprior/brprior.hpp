#pragma once

#include "brprior/bias.hpp"
#include "brprior/core.hpp"
#include "brprior/cumulants.hpp"
#include "brprior/experiment.hpp"
#include "brprior/inference.hpp"
#include "brprior/io.hpp"
#include "brprior/model.hpp"
#include "brprior/priors.hpp"
#include "brprior/registry.hpp"
