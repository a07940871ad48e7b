"""Q-learning with online conditional abstraction-tree refinement."""

__version__ = "0.1.0"

from .agent import (
    AbstractQTable,
    AgentConfig,
    DispersionLog,
    DispersionSample,
    EpisodeRecord,
    ExhaustedLeafError,
    LearnResult,
    learn,
)
from .cat import (
    Abstraction,
    Cat,
    Interval,
    VariableSpec,
    compare_fineness,
    deserialize_cat,
    f_split,
    is_direct_refinement,
    is_refinement,
    make_cat,
    serialize_cat,
)
from .baseline import ConcreteQTable, concrete_q_learn
from .envs import (
    OfficeWorld,
    StepResult,
    TaxiWorld,
    WaterWorld,
    WumpusWorld,
    office_make,
    taxi_make,
    waterworld_make,
    wumpus_make,
)
