import json
import os
import tempfile

from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from deformation import documents
from deformation.algebra import Chart
from deformation.family import TightFamily
from deformation.quantize import StarFamily
from deformation.stack import SimplicialComplex

FIXTURES = os.path.join(os.path.dirname(os.path.dirname(__file__)), 'fixtures')


def fixture(name):
    return documents.read_document(os.path.join(FIXTURES, name))


class ReadDocumentTests(SimpleTestCase):

    def test_malformed_json(self):
        with self.assertRaises(ValidationError) as caught:
            documents.read_document(os.path.join(FIXTURES, 'malformed.json'))
        self.assertEqual(caught.exception.code, 'malformed')

    def test_missing_file(self):
        with self.assertRaises(ValidationError) as caught:
            documents.read_document(os.path.join(FIXTURES, 'absent.json'))
        self.assertEqual(caught.exception.code, 'unreadable')

    def test_top_level_must_be_an_object(self):
        with tempfile.NamedTemporaryFile('w', suffix='.json', delete=False) as handle:
            json.dump([1, 2, 3], handle)
        self.addCleanup(os.remove, handle.name)
        with self.assertRaises(ValidationError):
            documents.read_document(handle.name)


class LoaderTests(SimpleTestCase):

    def test_courant_sections(self):
        sections, tw = documents.load_courant(fixture('courant.json'))
        self.assertEqual(len(sections), 3)
        self.assertFalse(tw.phi.is_zero())

    def test_open_twist_carries_a_witness(self):
        with self.assertRaises(ValidationError) as caught:
            documents.load_twisted_poisson(fixture('open_twist.json'))
        self.assertIn('dw', str(caught.exception.params['witness']))

    def test_missing_keys(self):
        with self.assertRaises(ValidationError) as caught:
            documents.load_twisted_poisson({'chart': ['x']})
        self.assertEqual(caught.exception.code, 'missing')

    def test_reserved_coordinate_names(self):
        with self.assertRaises(ValidationError):
            documents.load_chart(['x', 'h'])

    def test_tight_family(self):
        family = documents.load_tight_family(fixture('tight_family.json'))
        self.assertIsInstance(family, TightFamily)
        self.assertTrue(family.is_formal())
        self.assertEqual(family.chart.base.coordinates, ('t',))

    def test_twisted_documents_become_constant_families(self):
        family = documents.load_tight_family(fixture('constant_family.json'))
        self.assertEqual(family.chart.fibre.coordinates, ('x', 'y', 'z'))
        self.assertEqual(len(family.chart.base.coordinates), 3)

    def test_formal_flag_is_enforced(self):
        document = fixture('not_formal.json')
        document['formal'] = True
        with self.assertRaises(ValidationError) as caught:
            documents.load_tight_family(document)
        self.assertEqual(caught.exception.code, 'not-formal')

    def test_star_family_from_connection(self):
        family = documents.load_star_family(fixture('transport.json'))
        self.assertIsInstance(family, StarFamily)
        self.assertEqual(set(family.gamma1), {family.chart.index('t')})

    def test_star_family_from_poisson_family(self):
        family = documents.load_star_family(fixture('tight_family.json'))
        self.assertIsInstance(family, StarFamily)

    def test_connection_on_unknown_coordinate(self):
        document = fixture('transport.json')
        document['gamma1'] = {'s': 'h*Dx'}
        with self.assertRaises(ValidationError):
            documents.load_star_family(document)

    def test_disk_grid(self):
        disk = documents.load_disk(fixture('curved_holonomy.json')['disk'], Chart(('t1', 't2')))
        self.assertEqual(len(disk.tiles), 4)

    def test_complexes(self):
        base = Chart(('x', 'y', 'z'))
        single = documents.load_complex(fixture('moyal_stack.json')['complex'], base)
        cube = documents.load_complex(fixture('cube_stack.json')['complex'], base)
        self.assertIsInstance(single, SimplicialComplex)
        self.assertEqual(len(single.triangles), 4)
        self.assertEqual(len(cube.tetrahedra), 48)

    def test_phi_class(self):
        self.assertEqual(documents.load_phi_class({'0-1-2-3': -1}), {(0, 1, 2, 3): -1})
        with self.assertRaises(ValidationError):
            documents.load_phi_class({'0-1-2': 1})
        self.assertEqual(documents.load_phi_class(None), {})
