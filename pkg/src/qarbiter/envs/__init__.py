from .generate import (CollectConfig, EnvSpec, GenerationError, gen_collect,
                       gen_doorkey, gen_lava_crossing, reset)
from .grid import (ACT_FORWARD, ACT_LEFT, ACT_PICKUP, ACT_RIGHT, ACT_TOGGLE,
                   ACTION_COUNT, CELL_BALL, CELL_DOOR_LOCKED, CELL_DOOR_OPEN,
                   CELL_EMPTY, CELL_GOAL, CELL_KEY, CELL_LAVA, CELL_WALL,
                   ENV_COLLECT, ENV_DOOR_KEY, ENV_LAVA_CROSSING, HEADING_E,
                   HEADING_N, HEADING_S, HEADING_W, KIND_BALL, KIND_DOOR,
                   KIND_EMPTY, KIND_GOAL, KIND_KEY, KIND_LAVA, KIND_WALL,
                   NO_ITEM, STATE_LOCKED, STATE_NONE, STATE_OPEN, EnvOutcome,
                   GridState, egocentric_view, forward_cell, render, step,
                   success_reward)
