"""Registry of loss terms, selected by name from the config."""

from collections.abc import Sequence

from .exceptions import ConfigError
from .protocols import LossTermProtocol
from .terms import DistillationTerm, PrototypeTerm, SupervisedTerm, WeakTerm


class TermRegistry:
    """Registry of loss terms.

    Supports duck typing: any object implementing LossTermProtocol can be
    registered, not just subclasses of LossTerm.

    Example:
        registry = TermRegistry()
        registry.register(MyTerm())  # replaces a default of the same name
        terms = registry.resolve(("supervised", "my-term"))
    """

    def __init__(self) -> None:
        """Initialize the registry with the default terms."""
        self._terms: dict[str, LossTermProtocol] = {}
        self._register_default_terms()

    def _register_default_terms(self) -> None:
        """Register the four loss families."""
        self.register(SupervisedTerm())
        self.register(WeakTerm())
        self.register(PrototypeTerm())
        self.register(DistillationTerm())

    def register(self, term: LossTermProtocol) -> None:
        """Register a term under its name, replacing any previous one."""
        self._terms[term.name] = term

    def unregister(self, name: str) -> bool:
        """Remove a term.

        Returns:
            True if the term was registered
        """
        return self._terms.pop(name, None) is not None

    def get(self, name: str) -> LossTermProtocol | None:
        return self._terms.get(name)

    def resolve(self, names: Sequence[str]) -> list[LossTermProtocol]:
        """Get the terms of a config, in the order given.

        Raises:
            ConfigError: If a name is not registered or repeated
        """
        if len(set(names)) != len(names):
            raise ConfigError("terms", f"duplicate term in {list(names)}")
        terms = []
        for name in names:
            term = self._terms.get(name)
            if term is None:
                raise ConfigError(
                    "terms", f"unknown term '{name}' (known: {', '.join(self.names)})"
                )
            terms.append(term)
        return terms

    @property
    def names(self) -> list[str]:
        return sorted(self._terms)

    def __contains__(self, name: str) -> bool:
        return name in self._terms

    def __len__(self) -> int:
        return len(self._terms)


# Default global registry instance
_default_registry: TermRegistry | None = None


def get_default_registry() -> TermRegistry:
    """Get the default global term registry."""
    global _default_registry
    if _default_registry is None:
        _default_registry = TermRegistry()
    return _default_registry
