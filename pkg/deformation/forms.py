# forms.py
import json
import os

from django import forms
from django.core.exceptions import ValidationError

from .conf import get_setting
from .jobs import COMMANDS, JobSpec


class JobForm(forms.Form):
    """Options of one command-line job, validated before anything is computed."""

    command = forms.ChoiceField(choices=[(c, c) for c in COMMANDS + ('validate',)])
    input = forms.CharField(max_length=1024)
    order = forms.IntegerField(required=False, min_value=0)
    degree = forms.IntegerField(required=False, min_value=0)
    refinement = forms.IntegerField(required=False, min_value=0)
    region = forms.CharField(required=False)
    fixtures = forms.CharField(required=False)
    report = forms.CharField(required=False)
    export = forms.CharField(required=False)
    record = forms.BooleanField(required=False)

    def clean_order(self):
        order = self.cleaned_data.get('order')
        limit = get_setting('MAX_TRUNCATION_ORDER')
        if order is not None and order > limit:
            raise ValidationError(f'Truncation order must be between 0 and {limit}.')
        return order

    def clean_region(self):
        region = self.cleaned_data.get('region')
        if not region:
            return None
        try:
            box = json.loads(region)
        except json.JSONDecodeError:
            raise ValidationError('The region is a JSON list of [low, high] intervals.')
        if not isinstance(box, list) or not all(isinstance(b, list) and len(b) == 2 for b in box):
            raise ValidationError('The region is a JSON list of [low, high] intervals.')
        return box

    def clean(self):
        cleaned_data = super().clean()
        path = cleaned_data.get('input')
        fixtures = cleaned_data.get('fixtures')
        if path and fixtures and not os.path.isabs(path):
            path = os.path.join(fixtures, path)
        if path and not os.path.isfile(path):
            self.add_error('input', f'Input file {path} does not exist.')
        cleaned_data['input'] = path
        if cleaned_data.get('export') and cleaned_data.get('command') != 'stack-build':
            self.add_error('export', 'Only stack-build writes an export.')
        return cleaned_data

    def to_job(self):
        data = self.cleaned_data
        return JobSpec(
            command=data['command'],
            input=data['input'],
            order=data.get('order'),
            degree=data.get('degree'),
            refinement=data.get('refinement'),
            region=data.get('region'),
            export=data.get('export') or None,
        )
