from .features import FeatureSpec, extract_features
from .graphs import EVAL_ROWS, KEYCHEST_NAMES, eval_rows, ground_truth_graph
from .keychest import (
    Action,
    ConfigError,
    FeatureObservation,
    GridConfig,
    GridState,
    Item,
    KeyChestEnv,
    Layout,
    keychest_feature_spec,
    keychest_reset,
    keychest_step,
    load_fixed_b,
    parse_layout,
)
from .mdps import (
    AliasedMdp,
    DeterministicMdp,
    TwoPathMdp,
    TwoPathMdpConfig,
    aliased_mdp_step,
    twopath_mdp_step,
)


def make_env(env_id: str, **overrides):
    """Environment by id: ``A``/``B``/``C`` (KeyChest), ``Fig3`` or ``Fig5``."""
    if env_id in ("A", "B", "C"):
        return KeyChestEnv(GridConfig.for_env(env_id, **overrides))
    if env_id == "Fig3":
        return AliasedMdp(**overrides)
    if env_id == "Fig5":
        return TwoPathMdp(TwoPathMdpConfig(**overrides))
    raise ValueError(f"unknown environment {env_id!r}")
