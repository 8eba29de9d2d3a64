#pragma once

// Convenience include for the whole library.

#include "cpfilter/cli.hpp"
#include "cpfilter/competing_risks.hpp"
#include "cpfilter/cox.hpp"
#include "cpfilter/cpf.hpp"
#include "cpfilter/csv.hpp"
#include "cpfilter/data.hpp"
#include "cpfilter/errors.hpp"
#include "cpfilter/knockoff.hpp"
#include "cpfilter/lasso.hpp"
#include "cpfilter/metrics.hpp"
#include "cpfilter/mlp.hpp"
#include "cpfilter/model.hpp"
#include "cpfilter/model_config.hpp"
#include "cpfilter/rng.hpp"
#include "cpfilter/selection.hpp"
#include "cpfilter/serialize.hpp"
#include "cpfilter/simulation.hpp"
#include "cpfilter/statistics.hpp"
#include "cpfilter/version.hpp"
