#pragma once

#include "dialoguegen/config.hpp"
#include "dialoguegen/datastore.hpp"
#include "dialoguegen/error.hpp"
#include "dialoguegen/experience.hpp"
#include "dialoguegen/gateway.hpp"
#include "dialoguegen/groupchat.hpp"
#include "dialoguegen/judge.hpp"
#include "dialoguegen/metrics.hpp"
#include "dialoguegen/pipeline.hpp"
#include "dialoguegen/prompts.hpp"
#include "dialoguegen/rng.hpp"
