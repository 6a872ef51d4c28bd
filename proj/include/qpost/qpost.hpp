#pragma once

#include "qpost/core/errors.hpp"
#include "qpost/core/kernel.hpp"
#include "qpost/core/linalg.hpp"
#include "qpost/core/normal.hpp"
#include "qpost/core/random.hpp"
#include "qpost/core/types.hpp"
#include "qpost/estimators/bootstrap.hpp"
#include "qpost/estimators/fisher.hpp"
#include "qpost/experiments/config.hpp"
#include "qpost/experiments/convergence.hpp"
#include "qpost/experiments/interval.hpp"
#include "qpost/experiments/report.hpp"
#include "qpost/experiments/run.hpp"
#include "qpost/models/adapters.hpp"
#include "qpost/models/dataset.hpp"
#include "qpost/models/dgp.hpp"
#include "qpost/models/lin_re.hpp"
#include "qpost/models/linreg.hpp"
#include "qpost/models/median.hpp"
#include "qpost/models/probit_re.hpp"
#include "qpost/samplers/chain.hpp"
#include "qpost/samplers/conjugate.hpp"
#include "qpost/samplers/gibbs.hpp"
#include "qpost/samplers/pseudo_marginal.hpp"
#include "qpost/samplers/rwmh.hpp"
