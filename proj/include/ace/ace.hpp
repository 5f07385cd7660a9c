#pragma once

#include "ace/controller.hpp"
#include "ace/dataset.hpp"
#include "ace/error.hpp"
#include "ace/evaluators.hpp"
#include "ace/history.hpp"
#include "ace/io.hpp"
#include "ace/mask.hpp"
#include "ace/rng.hpp"
#include "ace/search.hpp"
