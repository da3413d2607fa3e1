#include "dm.h"

#define DM_NAME "device-mapper"
#define DM_ANY_MINOR (-1)

static int major;
static unsigned int _major;

struct mapped_device *alloc_dev(int minor)
{
	struct mapped_device *md = kzalloc(sizeof(*md), GFP_KERNEL);

	if (!md)
		return NULL;
	md->minor = minor;
	return md;
}

int dm_create(int minor, struct mapped_device **result)
{
	struct mapped_device *md;

	md = alloc_dev(minor);
	if (!md)
		return -ENXIO;
	*result = md;
	return 0;
}

void dm_destroy(struct mapped_device *md)
{
	set_bit(DMF_FREEING, &md->flags);
	kfree(md);
}

int dm_suspend(struct mapped_device *md, unsigned int suspend_flags)
{
	if (test_bit(DMF_SUSPENDED, &md->flags))
		return -EINVAL;
	set_bit(DMF_SUSPENDED, &md->flags);
	return 0;
}

int dm_resume(struct mapped_device *md)
{
	clear_bit(DMF_SUSPENDED, &md->flags);
	return 0;
}

static int __init dm_init(void)
{
	int r = dm_interface_init();

	if (r)
		return r;
	_major = major;
	return 0;
}

static void __exit dm_exit(void)
{
	dm_interface_exit();
}
