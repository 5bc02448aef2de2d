#pragma once

#include "hmc_lab/assumptions.hpp"
#include "hmc_lab/diagnostics/chain_stats.hpp"
#include "hmc_lab/diagnostics/drift.hpp"
#include "hmc_lab/diagnostics/energy.hpp"
#include "hmc_lab/diagnostics/horizon.hpp"
#include "hmc_lab/diagnostics/smallset.hpp"
#include "hmc_lab/diagnostics/tv.hpp"
