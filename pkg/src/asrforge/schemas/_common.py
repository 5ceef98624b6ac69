from pydantic import BaseModel, ConfigDict


class FrozenModel(BaseModel):
    """Неизменяемая модель: значения безопасно передавать между процессами"""

    model_config = ConfigDict(
        frozen=True, use_attribute_docstrings=True, protected_namespaces=()
    )
