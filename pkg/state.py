from typing import Any, Dict, List, Optional, TypedDict


class EventRecord(TypedDict, total=False):
    index: int
    party: str
    phase: str
    operation: str
    registers: List[str]
    created: List[str]
    messages: Dict[str, List[str]]


class RunReport(TypedDict):
    tool: str
    version: str
    subcommand: str
    config: Dict[str, Any]
    config_hash: str
    seed: int
    jobs: int
    wall_time_s: float
    status: str
    exit_code: int
    failure: Optional[str]
    result: Dict[str, Any]
