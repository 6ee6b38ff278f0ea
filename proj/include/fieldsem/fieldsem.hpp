#pragma once

#include "fieldsem/baseline.hpp"
#include "fieldsem/config.hpp"
#include "fieldsem/dataset.hpp"
#include "fieldsem/distributions.hpp"
#include "fieldsem/errors.hpp"
#include "fieldsem/information.hpp"
#include "fieldsem/joint_model.hpp"
#include "fieldsem/rng.hpp"
#include "fieldsem/sem.hpp"
#include "fieldsem/simulation.hpp"
