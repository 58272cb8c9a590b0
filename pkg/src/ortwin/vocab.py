"""Class vocabularies shared across the pipeline.

Event classes are the five surgical-workflow phases the detector localises.
Object classes are the semantic-mask categories the simulator paints: value 0
is the floor/background and values 1..14 are objects. The order is
load-bearing for one-hot encoding and for stored trial data, never reorder.
"""

EVENT_CLASSES = (
    "Patient Preparation",
    "Gurney Entering",
    "Loading patient to gurney",
    "Preparing patient to leave",
    "Patient out of the room",
)

OBJECT_CLASSES = (
    "background",
    "or_table",
    "gurney",
    "patient",
    "staff",
    "anesthesia_cart",
    "door",
    "instrument_table",
    "monitor",
    "surgical_light",
    "stool",
    "machine",
    "cabinet",
    "trash_bin",
    "iv_pole",
)

EVENT_TO_ID = {name: i for i, name in enumerate(EVENT_CLASSES)}
OBJECT_TO_ID = {name: i for i, name in enumerate(OBJECT_CLASSES)}

N_EVENT_CLASSES = len(EVENT_CLASSES)
# 14 object classes plus background; also the one-hot channel count.
N_MASK_VALUES = len(OBJECT_CLASSES)


def event_id(name: str) -> int:
    """Map an event class name to its id, raising on unknown names."""
    try:
        return EVENT_TO_ID[name]
    except KeyError:
        raise ValueError(f"unknown event class: {name!r}") from None


def event_name(class_id: int) -> str:
    if not 0 <= class_id < N_EVENT_CLASSES:
        raise ValueError(f"event class id out of range: {class_id}")
    return EVENT_CLASSES[class_id]
