#ifndef __KVM_HOST_H
#define __KVM_HOST_H

#include <linux/types.h>
#include <linux/kvm.h>

#define KVM_MAX_VCPUS 1024
#define KVM_USER_MEM_SLOTS 32

struct kvm_vcpu {
	struct kvm *kvm;
	int vcpu_id;
	int cpu;
	struct kvm_regs regs;
};

struct kvm {
	int nr_vcpus;
	struct kvm_vcpu *vcpus[KVM_MAX_VCPUS];
	unsigned long nr_memslot_pages;
};

struct kvm *kvm_create_vm(unsigned long type);
void kvm_put_kvm(struct kvm *kvm);
int kvm_arch_vcpu_ioctl_run(struct kvm_vcpu *vcpu);

#endif
