# Generated by Django 4.2.16 on 2026-10-17 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='VerificationRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(choices=[('check-courant', 'Courant axioms'), ('check-twisted-poisson', 'Twisted Poisson'), ('check-mc', 'Maurer-Cartan'), ('quantize', 'Quantize'), ('transport', 'Parallel transport'), ('holonomy', 'Disk holonomy'), ('stack-build', 'Stack build'), ('validate', 'Validate')], max_length=32)),
                ('input_name', models.CharField(blank=True, max_length=255)),
                ('input_digest', models.CharField(blank=True, max_length=64)),
                ('order', models.PositiveSmallIntegerField(blank=True, null=True)),
                ('exit_code', models.PositiveSmallIntegerField(default=0)),
                ('passed', models.BooleanField(default=False)),
                ('failed_checks', models.PositiveIntegerField(default=0)),
                ('report', models.JSONField(default=dict)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'verbose_name': 'Verification Run',
                'verbose_name_plural': 'Verification Runs',
                'ordering': ['-created_at'],
            },
        ),
    ]
