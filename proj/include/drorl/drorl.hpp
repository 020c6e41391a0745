#pragma once

#include "drorl/environments.hpp"
#include "drorl/error.hpp"
#include "drorl/experiment.hpp"
#include "drorl/linear_mdp.hpp"
#include "drorl/offline_data.hpp"
#include "drorl/oracle.hpp"
#include "drorl/random.hpp"
#include "drorl/results.hpp"
#include "drorl/robust_backup.hpp"
#include "drorl/solvers.hpp"
#include "drorl/tabular_mdp.hpp"
#include "drorl/uncertainty.hpp"
#include "drorl/worst_case.hpp"
