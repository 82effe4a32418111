from .dataset import TaskInstance, available_templates, build_prompt, load_dataset, prompt_template
from .experiment import InstanceRecord, RunReport, evaluate, run_experiment, sweep
from .treeio import (
    config_from_dict,
    config_to_dict,
    export_tree,
    tree_from_dict,
    tree_to_dict,
)

__all__ = [
    "TaskInstance",
    "available_templates",
    "build_prompt",
    "load_dataset",
    "prompt_template",
    "InstanceRecord",
    "RunReport",
    "evaluate",
    "run_experiment",
    "sweep",
    "config_from_dict",
    "config_to_dict",
    "export_tree",
    "tree_from_dict",
    "tree_to_dict",
]
