#pragma once

#include "truthts/rng.hpp"
#include "truthts/model.hpp"
#include "truthts/posterior.hpp"
#include "truthts/tsprob.hpp"
#include "truthts/linprog.hpp"
#include "truthts/union_find.hpp"
#include "truthts/truthful.hpp"
#include "truthts/agents.hpp"
#include "truthts/harness.hpp"
#include "truthts/experiment.hpp"
