#pragma once

// Convenience header: the whole library.

#include "magpos/config.hpp"
#include "magpos/error.hpp"
#include "magpos/eval.hpp"
#include "magpos/geometry.hpp"
#include "magpos/locator.hpp"
#include "magpos/net.hpp"
#include "magpos/pca.hpp"
#include "magpos/pca_server.hpp"
#include "magpos/pipeline.hpp"
#include "magpos/ranging.hpp"
#include "magpos/signal_sim.hpp"
#include "magpos/sinefit.hpp"
#include "magpos/survey.hpp"
#include "magpos/trilateration.hpp"
#include "magpos/types.hpp"
#include "magpos/wire.hpp"
