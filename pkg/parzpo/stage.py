from functools import wraps
from inspect import signature, Parameter, Signature
from parzpo.metadata import describe_stage
from parzpo.utility import modify_func, parse_functype

_POSITIONAL = (Parameter.POSITIONAL_ONLY, Parameter.POSITIONAL_OR_KEYWORD)


class Stage:
    """One step of a protocol: a function with a named output.

    :param str name: stage name, unique within a protocol graph
    :param callable func: stage function
    :param list inputs: parameter names replacing the function parameters
        in order; by default the function's parameters without defaults
    :param str output: name of the value the stage produces
    :param list modifiers: closures wrapping the stage function
    """

    def __init__(self, name, func, inputs=None, output=None, modifiers=None):
        self.name = self.__name__ = name
        self.output = output

        self._inputs = inputs or []
        self._modifiers = modifiers or []

        self.func = func
        self.functype = parse_functype(func)
        self.doc = func.__doc__

        self._base_func = self.convert_func(func, self._inputs)
        self.stage_func = modify_func(self._base_func, self._modifiers)

    @property
    def __signature__(self):
        """Stage signature for inspection."""
        return signature(self.stage_func)

    @property
    def signature(self):
        """Return signature."""
        return self.__signature__

    def convert_func(self, func, inputs):
        """Convert the function to a keyword-only stage function.

        With "inputs" the parameters are renamed positionally; otherwise
        the parameters with default values are left out of the signature.
        """

        sig = signature(func)

        if inputs:
            positional = [p for p in sig.parameters.values() if p.kind in _POSITIONAL]
            required = [p for p in positional if p.default is Parameter.empty]
            if len(inputs) < len(required):
                raise ValueError(f"not enough inputs for stage {self.name!r}")
            if len(inputs) > len(positional):
                raise ValueError(f"too many inputs for stage {self.name!r}")

            @wraps(func)
            def wrapped(**kwargs):
                return func(*(kwargs[name] for name in inputs))

            params = [Parameter(name, Parameter.POSITIONAL_OR_KEYWORD) for name in inputs]

        else:
            params = [
                Parameter(p.name, Parameter.POSITIONAL_OR_KEYWORD)
                for p in sig.parameters.values()
                if p.kind in (*_POSITIONAL, Parameter.KEYWORD_ONLY)
                and p.default is Parameter.empty
            ]

            @wraps(func)
            def wrapped(**kwargs):
                return func(**kwargs)

        wrapped.__signature__ = Signature(params)
        return wrapped

    @property
    def inputs(self):
        """Return a copy of inputs."""
        return self._inputs.copy()

    @property
    def modifiers(self):
        """Return a copy of modifiers."""
        return self._modifiers.copy()

    def __call__(self, *args, **kwargs):
        """Call the stage with bound arguments."""

        bound = self.signature.bind(*args, **kwargs)
        return self.stage_func(**bound.arguments)

    def __str__(self):
        return describe_stage(self)
