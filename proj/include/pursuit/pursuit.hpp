#pragma once

#include "config.hpp"
#include "evalkit.hpp"
#include "episode.hpp"
#include "geometry.hpp"
#include "model.hpp"
#include "nn.hpp"
#include "population.hpp"
#include "ppo.hpp"
#include "rng.hpp"
#include "rollout.hpp"
#include "scripted.hpp"
#include "sim.hpp"
#include "teammate.hpp"
#include "trainers.hpp"
#include "world.hpp"
