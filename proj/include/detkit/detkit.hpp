#pragma once

#include "detkit/augment.hpp"
#include "detkit/core.hpp"
#include "detkit/dataset_io.hpp"
#include "detkit/elephant.hpp"
#include "detkit/eval.hpp"
#include "detkit/image_io.hpp"
#include "detkit/mixup.hpp"
#include "detkit/schedule.hpp"
#include "detkit/syncbn.hpp"
#include "detkit/targets.hpp"
#include "detkit/version.hpp"
